#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace p2p {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Little-endian primitive writer for checkpoint files.
class BinaryWriter {
public:
    explicit BinaryWriter(const std::filesystem::path& path);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void str(const std::string& s);
    void matrix(const Eigen::MatrixXd& m);
    void bytes(const char* data, std::size_t n);
    void close();

private:
    std::ofstream out_;
    std::filesystem::path path_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::filesystem::path& path);
    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    std::string str();
    Eigen::MatrixXd matrix();
    void bytes(char* data, std::size_t n);
    bool at_end();

private:
    std::ifstream in_;
    std::filesystem::path path_;
};

/// Writes the 4-byte magic and a format version.
void write_header(BinaryWriter& w, const char (&magic)[5], std::uint32_t version);

/// Checks magic and version; throws CheckpointError on mismatch.
void read_header(BinaryReader& r, const char (&magic)[5], std::uint32_t version);

}  // namespace p2p
