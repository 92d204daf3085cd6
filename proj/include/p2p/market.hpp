#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace p2p::market {

enum class Side { Buy, Sell };

struct Order {
    std::string agent_id;
    Side side = Side::Buy;
    double quantity = 0.0;  // kWh
    double price = 0.0;     // currency per kWh
};

/// Internal community prices derived from the supply-demand ratio.
struct PriceSignal {
    double isp = 0.0;
    double ibp = 0.0;
    double sdr = 0.0;
    double lambda_buy = 0.0;
    double lambda_sell = 0.0;
    bool saturated = false;  // supply > 0 with zero demand, or SDR > 1
};

struct Trade {
    std::string buyer_id;
    std::string seller_id;
    double quantity = 0.0;
    double buyer_price = 0.0;
    double seller_price = 0.0;
};

struct ClearingResult {
    std::vector<Trade> trades;
    std::vector<Order> residual_buys;
    std::vector<Order> residual_sells;
};

struct Settlement {
    std::vector<Trade> trades;
    std::map<std::string, double> grid_purchases;  // kWh bought at lambda_buy
    std::map<std::string, double> grid_sales;      // kWh sold at lambda_sell
    std::map<std::string, double> cash_flows;      // + received, - paid
    double operator_spread = 0.0;                  // (IBP - ISP) * traded kWh
    double grid_cash = 0.0;                        // net cash received by the grid
};

class MarketError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Supply / demand. Returns +inf when demand is zero and supply positive,
/// and 1 when both are zero.
double compute_sdr(double total_supply, double total_demand);

/// ISP/IBP from the SDR method. For sdr in [0, 1] the closed forms apply;
/// above 1 both prices collapse to lambda_sell.
PriceSignal internal_prices(double sdr, double lambda_buy, double lambda_sell);

/// Price-priority matching. Bids sorted by descending price, asks ascending
/// (ties: larger quantity first, then agent id). Trades execute at the
/// uniform community prices (IBP for buyers, ISP for sellers).
ClearingResult clear_double_auction(std::span<const Order> buy_book, std::span<const Order> sell_book,
                                    const PriceSignal& prices);

/// Residual buys go to the grid at lambda_buy, residual sells at lambda_sell.
Settlement settle(std::span<const Trade> trades, std::span<const Order> residual_buys,
                  std::span<const Order> residual_sells, const PriceSignal& prices);

}  // namespace p2p::market
