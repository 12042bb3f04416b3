#include "vacl/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

#include <unistd.h>
#include <zlib.h>

#include "vacl/errors.hpp"

namespace vacl {

namespace {

constexpr std::string_view kMagic = "VACL";

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

std::uint32_t crc32_of(std::string_view bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in pieces.
    constexpr std::size_t kChunk = std::size_t{1} << 30;
    for (std::size_t pos = 0; pos < bytes.size(); pos += kChunk) {
        const std::size_t n = std::min(kChunk, bytes.size() - pos);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
    }
    return static_cast<std::uint32_t>(crc);
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return value;
    }

    std::string_view take(std::size_t n) {
        need(n);
        std::string_view out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (n > bytes_.size() - pos_) throw IoError("checkpoint is truncated");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ParamMap& tensors) {
    if (tensors.size() > std::numeric_limits<std::uint32_t>::max()) throw IoError("too many checkpoint entries");
    std::string out(kMagic);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
        const std::size_t start = out.size();
        out.resize(start + t.size() * sizeof(double));
        if constexpr (std::endian::native == std::endian::little) {
            if (t.size() != 0) std::memcpy(out.data() + start, t.data().data(), t.size() * sizeof(double));
        } else {
            std::string tmp;
            for (double v : t.data()) put_le<std::uint64_t>(tmp, std::bit_cast<std::uint64_t>(v));
            std::memcpy(out.data() + start, tmp.data(), tmp.size());
        }
    }
    put_le<std::uint32_t>(out, crc32_of(out));
    return out;
}

ParamMap parse_checkpoint(std::string_view bytes) {
    if (bytes.size() < kMagic.size() + 12) throw IoError("checkpoint is truncated");
    const std::string_view body = bytes.substr(0, bytes.size() - 4);
    Reader crc_reader(bytes.substr(bytes.size() - 4));
    if (crc_reader.get<std::uint32_t>() != crc32_of(body)) throw IoError("checkpoint CRC mismatch");

    Reader in(body);
    if (in.take(kMagic.size()) != kMagic) throw IoError("not a VACL checkpoint (bad magic)");
    const auto version = in.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    const auto count = in.get<std::uint32_t>();
    ParamMap out;
    for (std::uint32_t e = 0; e < count; ++e) {
        const auto name_len = in.get<std::uint32_t>();
        std::string name(in.take(name_len));
        const auto ndim = in.get<std::uint32_t>();
        Shape shape;
        for (std::uint32_t k = 0; k < ndim; ++k) shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>()));
        std::size_t elements = 1;
        if (std::find(shape.begin(), shape.end(), 0) != shape.end()) {
            elements = 0;
        } else {
            for (std::size_t dim : shape) {
                if (elements > in.remaining() / dim) throw IoError("checkpoint tensor extents are too large");
                elements *= dim;
            }
        }
        if (elements > in.remaining() / sizeof(double)) throw IoError("checkpoint is truncated");
        std::string_view raw = in.take(elements * sizeof(double));
        std::vector<double> data(elements);
        if constexpr (std::endian::native == std::endian::little) {
            if (elements) std::memcpy(data.data(), raw.data(), raw.size());
        } else {
            Reader payload(raw);
            for (double& v : data) v = std::bit_cast<double>(payload.get<std::uint64_t>());
        }
        if (!out.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
            throw IoError("checkpoint repeats entry '" + name + "'");
        }
    }
    if (in.remaining() != 0) throw IoError("checkpoint has trailing bytes");
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParamMap& tensors) {
    write_file_atomic(path, serialize_checkpoint(tensors));
}

ParamMap load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("short write to '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move output into place at '" + path.string() + "'");
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace vacl
