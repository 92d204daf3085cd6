#include "p2p/market.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace p2p::market {

namespace {

void validate(const Order& o, Side expected) {
    if (o.side != expected) throw MarketError("order from '" + o.agent_id + "' is in the wrong book");
    if (!(o.quantity > 0.0) || !std::isfinite(o.quantity))
        throw MarketError("order from '" + o.agent_id + "' has non-positive quantity");
    if (!(o.price >= 0.0) || !std::isfinite(o.price))
        throw MarketError("order from '" + o.agent_id + "' has negative price");
}

bool bid_before(const Order& a, const Order& b) {
    if (a.price != b.price) return a.price > b.price;
    if (a.quantity != b.quantity) return a.quantity > b.quantity;
    return a.agent_id < b.agent_id;
}

bool ask_before(const Order& a, const Order& b) {
    if (a.price != b.price) return a.price < b.price;
    if (a.quantity != b.quantity) return a.quantity > b.quantity;
    return a.agent_id < b.agent_id;
}

}  // namespace

double compute_sdr(double total_supply, double total_demand) {
    if (total_supply < 0.0 || total_demand < 0.0) throw MarketError("supply and demand must be non-negative");
    if (total_demand == 0.0) return total_supply > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
    return total_supply / total_demand;
}

PriceSignal internal_prices(double sdr, double lambda_buy, double lambda_sell) {
    if (!(lambda_sell > 0.0)) throw MarketError("lambda_sell must be positive");
    if (!(lambda_sell < lambda_buy)) throw MarketError("lambda_sell must be below lambda_buy");
    if (!(sdr >= 0.0)) throw MarketError("sdr must be non-negative");

    PriceSignal p;
    p.sdr = sdr;
    p.lambda_buy = lambda_buy;
    p.lambda_sell = lambda_sell;
    if (sdr > 1.0) {
        p.isp = lambda_sell;
        p.ibp = lambda_sell;
        p.saturated = true;
        return p;
    }
    p.isp = lambda_sell * lambda_buy / ((lambda_buy - lambda_sell) * sdr + lambda_sell);
    p.ibp = p.isp * sdr + lambda_buy * (1.0 - sdr);
    return p;
}

ClearingResult clear_double_auction(std::span<const Order> buy_book, std::span<const Order> sell_book,
                                    const PriceSignal& prices) {
    std::vector<Order> bids(buy_book.begin(), buy_book.end());
    std::vector<Order> asks(sell_book.begin(), sell_book.end());
    for (const auto& o : bids) validate(o, Side::Buy);
    for (const auto& o : asks) validate(o, Side::Sell);
    std::sort(bids.begin(), bids.end(), bid_before);
    std::sort(asks.begin(), asks.end(), ask_before);

    ClearingResult result;
    std::size_t bi = 0, si = 0;
    while (bi < bids.size() && si < asks.size() && bids[bi].price >= asks[si].price) {
        Order& bid = bids[bi];
        Order& ask = asks[si];
        const double q = std::min(bid.quantity, ask.quantity);
        result.trades.push_back({bid.agent_id, ask.agent_id, q, prices.ibp, prices.isp});
        if (bid.quantity == q) {
            bid.quantity = 0.0;
            ++bi;
        } else {
            bid.quantity -= q;
        }
        if (ask.quantity == q) {
            ask.quantity = 0.0;
            ++si;
        } else {
            ask.quantity -= q;
        }
    }
    for (; bi < bids.size(); ++bi)
        if (bids[bi].quantity > 0.0) result.residual_buys.push_back(bids[bi]);
    for (; si < asks.size(); ++si)
        if (asks[si].quantity > 0.0) result.residual_sells.push_back(asks[si]);
    return result;
}

Settlement settle(std::span<const Trade> trades, std::span<const Order> residual_buys,
                  std::span<const Order> residual_sells, const PriceSignal& prices) {
    Settlement s;
    s.trades.assign(trades.begin(), trades.end());
    for (const auto& t : trades) {
        const double paid = t.quantity * t.buyer_price;
        const double received = t.quantity * t.seller_price;
        s.cash_flows[t.buyer_id] -= paid;
        s.cash_flows[t.seller_id] += received;
        s.operator_spread += paid - received;
    }
    for (const auto& o : residual_buys) {
        s.grid_purchases[o.agent_id] += o.quantity;
        s.cash_flows[o.agent_id] -= o.quantity * prices.lambda_buy;
        s.grid_cash += o.quantity * prices.lambda_buy;
    }
    for (const auto& o : residual_sells) {
        s.grid_sales[o.agent_id] += o.quantity;
        s.cash_flows[o.agent_id] += o.quantity * prices.lambda_sell;
        s.grid_cash -= o.quantity * prices.lambda_sell;
    }
    return s;
}

}  // namespace p2p::market
