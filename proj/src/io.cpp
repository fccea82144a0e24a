#include "otground/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace otground {
namespace {

template <typename UInt>
void put_le(std::string& out, UInt value)
{
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
        out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename UInt>
UInt get_le(std::string_view bytes, std::size_t offset)
{
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
        value |= static_cast<UInt>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
    return value;
}

} // namespace

std::string encode_embeddings(const MatrixXd& rows)
{
    if (rows.rows() > 0xffffffffLL || rows.cols() > 0xffffffffLL)
        throw InvalidArgument("embedding matrix too large for the file format");
    std::string out;
    out.reserve(kEmbeddingHeaderBytes + 4 * static_cast<std::size_t>(rows.size()));
    out.append(kEmbeddingMagic.data(), kEmbeddingMagic.size());
    put_le<std::uint16_t>(out, kEmbeddingVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rows.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rows.cols()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
        for (Eigen::Index j = 0; j < rows.cols(); ++j)
            put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(rows(i, j))));
    return out;
}

MatrixXd decode_embeddings(std::string_view bytes)
{
    if (bytes.size() < kEmbeddingHeaderBytes)
        throw FormatError("embedding file: " + std::to_string(bytes.size()) + " bytes is shorter than the " +
                          std::to_string(kEmbeddingHeaderBytes) + "-byte header");
    if (std::memcmp(bytes.data(), kEmbeddingMagic.data(), kEmbeddingMagic.size()) != 0)
        throw FormatError("embedding file: bad magic (expected OTEB)");
    const auto version = get_le<std::uint16_t>(bytes, 4);
    if (version != kEmbeddingVersion)
        throw FormatError("embedding file: unsupported version " + std::to_string(version));
    const auto count = get_le<std::uint32_t>(bytes, 6);
    const auto dim = get_le<std::uint32_t>(bytes, 10);
    const std::uint64_t expected = kEmbeddingHeaderBytes + 4ULL * count * dim;
    if (bytes.size() != expected)
        throw FormatError("embedding file: expected " + std::to_string(expected) + " bytes for " +
                          std::to_string(count) + "x" + std::to_string(dim) + ", got " +
                          std::to_string(bytes.size()));
    MatrixXd out(count, dim);
    std::size_t offset = kEmbeddingHeaderBytes;
    for (std::uint32_t i = 0; i < count; ++i)
        for (std::uint32_t j = 0; j < dim; ++j, offset += 4)
            out(i, j) = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, offset)));
    return out;
}

void write_embeddings(const std::filesystem::path& path, const MatrixXd& rows)
{
    write_file_atomic(path, encode_embeddings(rows));
}

MatrixXd read_embeddings(const std::filesystem::path& path)
{
    return decode_embeddings(read_file(path));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents)
{
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw InvalidArgument("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            std::filesystem::remove(tmp);
            throw InvalidArgument("failed writing " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InvalidArgument("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

} // namespace otground
