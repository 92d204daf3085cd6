#include "p2p/binary_io.hpp"

#include <bit>
#include <cstring>

namespace p2p {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

BinaryWriter::BinaryWriter(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw CheckpointError("cannot write '" + path.string() + "'");
}

void BinaryWriter::bytes(const char* data, std::size_t n) {
    out_.write(data, static_cast<std::streamsize>(n));
    if (!out_) throw CheckpointError("write failed for '" + path_.string() + "'");
}

void BinaryWriter::u32(std::uint32_t v) { bytes(reinterpret_cast<const char*>(&v), sizeof v); }
void BinaryWriter::u64(std::uint64_t v) { bytes(reinterpret_cast<const char*>(&v), sizeof v); }
void BinaryWriter::f64(double v) { bytes(reinterpret_cast<const char*>(&v), sizeof v); }

void BinaryWriter::str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
}

void BinaryWriter::matrix(const Eigen::MatrixXd& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    // Column-major, as stored by Eigen.
    bytes(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
}

void BinaryWriter::close() {
    out_.close();
    if (!out_) throw CheckpointError("cannot finish '" + path_.string() + "'");
}

BinaryReader::BinaryReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw CheckpointError("cannot open '" + path.string() + "'");
}

void BinaryReader::bytes(char* data, std::size_t n) {
    in_.read(data, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw CheckpointError("truncated file '" + path_.string() + "'");
}

std::uint32_t BinaryReader::u32() {
    std::uint32_t v = 0;
    bytes(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

std::uint64_t BinaryReader::u64() {
    std::uint64_t v = 0;
    bytes(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

double BinaryReader::f64() {
    double v = 0;
    bytes(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

std::string BinaryReader::str() {
    const std::uint64_t n = u64();
    if (n > (1u << 26)) throw CheckpointError("implausible string length in '" + path_.string() + "'");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
}

Eigen::MatrixXd BinaryReader::matrix() {
    const std::uint64_t rows = u64();
    const std::uint64_t cols = u64();
    if (rows > (1u << 20) || cols > (1u << 20) || rows * cols > (1u << 26))
        throw CheckpointError("implausible tensor shape in '" + path_.string() + "'");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    bytes(reinterpret_cast<char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
    return m;
}

bool BinaryReader::at_end() { return in_.peek() == std::char_traits<char>::eof(); }

void write_header(BinaryWriter& w, const char (&magic)[5], std::uint32_t version) {
    w.bytes(magic, 4);
    w.u32(version);
}

void read_header(BinaryReader& r, const char (&magic)[5], std::uint32_t version) {
    char got[4];
    r.bytes(got, 4);
    if (std::memcmp(got, magic, 4) != 0) throw CheckpointError("not a " + std::string(magic, 4) + " checkpoint");
    const std::uint32_t v = r.u32();
    if (v != version)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(v) + " (expected " +
                              std::to_string(version) + ")");
}

}  // namespace p2p
