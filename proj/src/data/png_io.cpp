#include "data/png_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "core/errors.hpp"

namespace ecdm::data {

namespace {

const uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& payload) {
    put_u32(out, static_cast<uint32_t>(payload.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uint32_t crc = crc32(0, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32(out, crc);
}

uint8_t paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
    if (pb <= pc) return static_cast<uint8_t>(b);
    return static_cast<uint8_t>(c);
}

} // namespace

void write_png(const std::string& path, const RawImage& image) {
    if (image.channels != 1 && image.channels != 3)
        throw std::invalid_argument("write_png: only grayscale/RGB supported");
    if (image.width < 1 || image.height < 1 ||
        image.pixels.size() !=
            static_cast<size_t>(image.width) * image.height * image.channels)
        throw std::invalid_argument("write_png: inconsistent dimensions");

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(image.width));
    put_u32(ihdr, static_cast<uint32_t>(image.height));
    ihdr.push_back(8);                                     // bit depth
    ihdr.push_back(image.channels == 1 ? 0 : 2);           // color type
    ihdr.push_back(0);                                     // compression
    ihdr.push_back(0);                                     // filter method
    ihdr.push_back(0);                                     // no interlace

    const size_t row = static_cast<size_t>(image.width) * image.channels;
    std::vector<uint8_t> raw;
    raw.reserve((row + 1) * image.height);
    for (int y = 0; y < image.height; ++y) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), image.pixels.begin() + y * row,
                   image.pixels.begin() + (y + 1) * row);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> idat(bound);
    if (compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw DataError("write_png: zlib compression failed for " + path);
    idat.resize(bound);

    std::vector<uint8_t> file(kSignature, kSignature + 8);
    append_chunk(file, "IHDR", ihdr);
    append_chunk(file, "IDAT", idat);
    append_chunk(file, "IEND", {});

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("write_png: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(file.data()),
              static_cast<std::streamsize>(file.size()));
    if (!out) throw DataError("write_png: short write to " + path);
}

namespace {

struct PngChunks {
    int width = 0, height = 0, channels = 0;
    std::vector<uint8_t> idat;
};

PngChunks parse_png(const std::string& path, bool header_only) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("read_png: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw DataError("read_png: " + path + " is not a PNG file");

    PngChunks out;
    size_t pos = 8;
    bool saw_ihdr = false;
    while (pos + 8 <= bytes.size()) {
        const uint32_t len = get_u32(&bytes[pos]);
        if (pos + 12 + len > bytes.size())
            throw DataError("read_png: truncated chunk in " + path);
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const uint8_t* payload = &bytes[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError("read_png: bad IHDR in " + path);
            out.width = static_cast<int>(get_u32(payload));
            out.height = static_cast<int>(get_u32(payload + 4));
            const int depth = payload[8], color = payload[9], interlace = payload[12];
            if (depth != 8 || (color != 0 && color != 2) || interlace != 0)
                throw DataError("read_png: unsupported PNG variant in " + path +
                                " (need 8-bit gray or RGB, non-interlaced)");
            out.channels = color == 0 ? 1 : 3;
            saw_ihdr = true;
            if (header_only) return out;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            out.idat.insert(out.idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr) throw DataError("read_png: missing IHDR in " + path);
    return out;
}

} // namespace

void read_png_header(const std::string& path, int* width, int* height, int* channels) {
    const PngChunks c = parse_png(path, true);
    if (width) *width = c.width;
    if (height) *height = c.height;
    if (channels) *channels = c.channels;
}

RawImage read_png(const std::string& path) {
    const PngChunks c = parse_png(path, false);
    RawImage img;
    img.width = c.width;
    img.height = c.height;
    img.channels = c.channels;

    const size_t row = static_cast<size_t>(c.width) * c.channels;
    const size_t raw_size = (row + 1) * c.height;
    std::vector<uint8_t> raw(raw_size);
    uLongf dest_len = static_cast<uLongf>(raw_size);
    if (uncompress(raw.data(), &dest_len, c.idat.data(), static_cast<uLong>(c.idat.size())) !=
            Z_OK ||
        dest_len != raw_size)
        throw DataError("read_png: zlib inflate failed for " + path);

    img.pixels.resize(row * c.height);
    const int bpp = c.channels;
    std::vector<uint8_t> prev(row, 0);
    for (int y = 0; y < c.height; ++y) {
        const uint8_t filter = raw[y * (row + 1)];
        const uint8_t* src = &raw[y * (row + 1) + 1];
        uint8_t* dst = &img.pixels[y * row];
        for (size_t x = 0; x < row; ++x) {
            const int a = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
            const int b = prev[x];
            const int cc = x >= static_cast<size_t>(bpp) ? prev[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, cc); break;
                default: throw DataError("read_png: bad filter type in " + path);
            }
            dst[x] = static_cast<uint8_t>(v);
        }
        std::memcpy(prev.data(), dst, row);
    }
    return img;
}

RawImage to_raw(const ImageTensor& t) {
    RawImage raw;
    raw.width = t.width;
    raw.height = t.height;
    raw.channels = t.channels;
    raw.pixels.resize(t.values.size());
    const size_t plane = static_cast<size_t>(t.height) * t.width;
    for (int c = 0; c < t.channels; ++c)
        for (size_t i = 0; i < plane; ++i) {
            const double v = std::clamp(t.values[c * plane + i], -1.0, 1.0);
            const double mapped = (v + 1.0) * 0.5 * 255.0;
            raw.pixels[i * t.channels + c] =
                static_cast<uint8_t>(std::lround(mapped));
        }
    return raw;
}

ImageTensor from_raw(const RawImage& raw) {
    ImageTensor t(raw.channels, raw.height, raw.width);
    const size_t plane = static_cast<size_t>(raw.height) * raw.width;
    for (int c = 0; c < raw.channels; ++c)
        for (size_t i = 0; i < plane; ++i)
            t.values[c * plane + i] =
                raw.pixels[i * raw.channels + c] / 255.0 * 2.0 - 1.0;
    return t;
}

void save_image(const std::string& path, const ImageTensor& t) {
    write_png(path, to_raw(t));
}

ImageTensor load_image(const std::string& path) { return from_raw(read_png(path)); }

} // namespace ecdm::data
