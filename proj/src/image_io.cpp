#include "rft/image_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "rft/error.hpp"

namespace rft {

namespace {

struct Cursor {
    const std::string& bytes;
    size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("pixmap: " + what + " at byte " + std::to_string(pos));
    }

    void skip_space_and_comments() {
        while (pos < bytes.size()) {
            char c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    long read_int() {
        skip_space_and_comments();
        if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9')
            fail("expected unsigned integer");
        long v = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1'000'000'000L) fail("integer overflow");
            ++pos;
        }
        return v;
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ParseError("short write to '" + path + "'");
}

Tensor decode_pnm(const std::string& bytes, char kind) {
    Cursor c{bytes};
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != kind) {
        c.pos = 0;
        c.fail(std::string("expected magic P") + kind);
    }
    c.pos = 2;
    long w = c.read_int();
    long h = c.read_int();
    long maxval = c.read_int();
    if (w <= 0 || h <= 0) c.fail("non-positive dimensions");
    if (maxval <= 0 || maxval > 255) c.fail("maxval " + std::to_string(maxval) + " unsupported");
    // Exactly one whitespace byte separates the header from the payload.
    if (c.pos >= bytes.size() || !(bytes[c.pos] == '\n' || bytes[c.pos] == ' ' ||
                                   bytes[c.pos] == '\t' || bytes[c.pos] == '\r'))
        c.fail("expected single whitespace before payload");
    ++c.pos;

    long channels = kind == '6' ? 3 : 1;
    size_t expected = static_cast<size_t>(w) * static_cast<size_t>(h) *
                      static_cast<size_t>(channels);
    size_t have = bytes.size() - c.pos;
    if (have < expected)
        throw ParseError("pixmap: truncated payload at byte " + std::to_string(c.pos) +
                         ": expected " + std::to_string(expected) + " bytes, have " +
                         std::to_string(have));

    Tensor out(kind == '6' ? Shape{3, h, w} : Shape{h, w});
    const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data() + c.pos);
    double inv = 1.0 / static_cast<double>(maxval);
    if (kind == '6') {
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x)
                for (long ch = 0; ch < 3; ++ch)
                    out.at(ch, y, x) = inv * p[(y * w + x) * 3 + ch];
    } else {
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x) out.at(y, x) = inv * p[y * w + x];
    }
    return out;
}

unsigned char quantize(double v) {
    double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<unsigned char>(std::lround(clamped * 255.0));
}

}  // namespace

Tensor decode_ppm(const std::string& bytes) { return decode_pnm(bytes, '6'); }
Tensor decode_pgm(const std::string& bytes) { return decode_pnm(bytes, '5'); }

std::string encode_ppm(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw DimensionError("encode_ppm: need [3 x H x W], got " + shape_str(image.shape()));
    Index h = image.dim(1), w = image.dim(2);
    std::ostringstream os;
    os << "P6\n" << w << " " << h << "\n255\n";
    std::string bytes = os.str();
    bytes.reserve(bytes.size() + static_cast<size_t>(3 * h * w));
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            for (Index ch = 0; ch < 3; ++ch)
                bytes.push_back(static_cast<char>(quantize(image.at(ch, y, x))));
    return bytes;
}

std::string encode_pgm(const Tensor& plane) {
    if (plane.rank() != 2)
        throw DimensionError("encode_pgm: need [H x W], got " + shape_str(plane.shape()));
    Index h = plane.dim(0), w = plane.dim(1);
    std::ostringstream os;
    os << "P5\n" << w << " " << h << "\n255\n";
    std::string bytes = os.str();
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            bytes.push_back(static_cast<char>(quantize(plane.at(y, x))));
    return bytes;
}

Tensor read_ppm(const std::string& path) { return decode_ppm(read_file(path)); }
Tensor read_pgm(const std::string& path) { return decode_pgm(read_file(path)); }
void write_ppm(const std::string& path, const Tensor& image) { write_file(path, encode_ppm(image)); }
void write_pgm(const std::string& path, const Tensor& plane) { write_file(path, encode_pgm(plane)); }

}  // namespace rft
