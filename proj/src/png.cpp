#include "crwkv/png.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "crwkv/common.hpp"

namespace crwkv {

namespace {

constexpr unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::uint32_t be32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

unsigned char clamp_byte(float v) {
    float scaled = std::round(std::min(1.0f, std::max(0.0f, v)) * 255.0f);
    return static_cast<unsigned char>(scaled);
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

void unfilter(std::vector<unsigned char>& raw, std::int64_t h, std::int64_t w, int bpp,
              const std::string& path) {
    const std::int64_t stride = w * bpp;
    std::vector<unsigned char> prev(static_cast<std::size_t>(stride), 0);
    for (std::int64_t y = 0; y < h; ++y) {
        unsigned char* row = raw.data() + y * (stride + 1);
        const int filter = row[0];
        unsigned char* cur = row + 1;
        switch (filter) {
            case 0:
                break;
            case 1:
                for (std::int64_t i = bpp; i < stride; ++i)
                    cur[i] = static_cast<unsigned char>(cur[i] + cur[i - bpp]);
                break;
            case 2:
                for (std::int64_t i = 0; i < stride; ++i)
                    cur[i] = static_cast<unsigned char>(cur[i] + prev[static_cast<std::size_t>(i)]);
                break;
            case 3:
                for (std::int64_t i = 0; i < stride; ++i) {
                    int left = i >= bpp ? cur[i - bpp] : 0;
                    cur[i] = static_cast<unsigned char>(
                        cur[i] + ((left + prev[static_cast<std::size_t>(i)]) >> 1));
                }
                break;
            case 4:
                for (std::int64_t i = 0; i < stride; ++i) {
                    int left = i >= bpp ? cur[i - bpp] : 0;
                    int upleft = i >= bpp ? prev[static_cast<std::size_t>(i - bpp)] : 0;
                    cur[i] = static_cast<unsigned char>(
                        cur[i] + paeth(left, prev[static_cast<std::size_t>(i)], upleft));
                }
                break;
            default:
                throw IoError("png '" + path + "': unknown filter type " + std::to_string(filter));
        }
        std::memcpy(prev.data(), cur, static_cast<std::size_t>(stride));
    }
}

std::vector<unsigned char> zlib_inflate(const unsigned char* data, std::size_t n,
                                        std::size_t expect, const std::string& path) {
    std::vector<unsigned char> out(expect);
    uLongf out_len = static_cast<uLongf>(expect);
    int rc = uncompress(out.data(), &out_len, data, static_cast<uLong>(n));
    if (rc != Z_OK || out_len != expect)
        throw IoError("png '" + path + "': corrupt IDAT stream (zlib rc " + std::to_string(rc) +
                      ")");
    return out;
}

}  // namespace

Image load_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<unsigned char> file((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (file.size() < 8 || std::memcmp(file.data(), kSignature, 8) != 0)
        throw IoError("'" + path + "' is not a PNG file");

    std::int64_t w = 0, h = 0;
    int bit_depth = 0, color_type = 0;
    std::vector<unsigned char> idat;
    std::size_t pos = 8;
    bool seen_ihdr = false, seen_iend = false;
    while (pos + 8 <= file.size() && !seen_iend) {
        std::uint32_t len = be32(file.data() + pos);
        if (pos + 12 + len > file.size()) throw IoError("png '" + path + "': truncated chunk");
        const char* tag = reinterpret_cast<const char*>(file.data() + pos + 4);
        const unsigned char* payload = file.data() + pos + 8;
        if (std::memcmp(tag, "IHDR", 4) == 0) {
            if (len != 13) throw IoError("png '" + path + "': bad IHDR");
            w = be32(payload);
            h = be32(payload + 4);
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) throw IoError("png '" + path + "': interlacing unsupported");
            seen_ihdr = true;
        } else if (std::memcmp(tag, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(tag, "IEND", 4) == 0) {
            seen_iend = true;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || w <= 0 || h <= 0) throw IoError("png '" + path + "': missing image header");
    if (bit_depth != 8)
        throw IoError("png '" + path + "': unsupported bit depth " + std::to_string(bit_depth) +
                      " (only 8-bit images are supported)");
    int channels;
    switch (color_type) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 6: channels = 4; break;
        default:
            throw IoError("png '" + path + "': unsupported color type " +
                          std::to_string(color_type));
    }
    const std::size_t expect = static_cast<std::size_t>(h) * (static_cast<std::size_t>(w) * channels + 1);
    auto raw = zlib_inflate(idat.data(), idat.size(), expect, path);
    unfilter(raw, h, w, channels, path);

    Image img(h, w);
    for (std::int64_t y = 0; y < h; ++y) {
        const unsigned char* row = raw.data() + y * (w * channels + 1) + 1;
        for (std::int64_t x = 0; x < w; ++x) {
            const unsigned char* px = row + x * channels;
            for (int c = 0; c < 3; ++c) {
                unsigned char b = channels == 1 ? px[0] : px[c];
                img.at(y, x, c) = static_cast<float>(b) / 255.0f;
            }
        }
    }
    return img;
}

void save_png(const Image& img, const std::string& path) {
    if (img.h <= 0 || img.w <= 0) throw IoError("save_png '" + path + "': empty image");
    const std::int64_t stride = img.w * 3;
    std::vector<unsigned char> raw(static_cast<std::size_t>(img.h * (stride + 1)));
    for (std::int64_t y = 0; y < img.h; ++y) {
        unsigned char* row = raw.data() + y * (stride + 1);
        row[0] = 0;  // filter: none
        for (std::int64_t x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) row[1 + x * 3 + c] = clamp_byte(img.at(y, x, c));
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("save_png '" + path + "': deflate failed");
    compressed.resize(bound);

    std::vector<unsigned char> out(kSignature, kSignature + 8);
    auto chunk = [&out](const char* tag, const std::vector<unsigned char>& payload) {
        put_be32(out, static_cast<std::uint32_t>(payload.size()));
        std::size_t crc_start = out.size();
        out.insert(out.end(), tag, tag + 4);
        out.insert(out.end(), payload.begin(), payload.end());
        uLong crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
        put_be32(out, static_cast<std::uint32_t>(crc));
    };
    std::vector<unsigned char> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(img.w));
    put_be32(ihdr, static_cast<std::uint32_t>(img.h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    chunk("IHDR", ihdr);
    chunk("IDAT", compressed);
    chunk("IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path + "'");
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to '" + path + "'");
}

}  // namespace crwkv
