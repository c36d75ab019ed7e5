#include "sensemap/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>

namespace sensemap {

namespace {

struct MemReader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos;
};

void mem_read(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
    if (r->pos + n > r->size) {
        png_error(png, "read past end of buffer");
        return;
    }
    std::memcpy(out, r->data + r->pos, n);
    r->pos += n;
}

void mem_write(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + n);
}

void mem_flush(png_structp) {}

struct Raster {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels; // row-major, interleaved
};

std::vector<std::uint8_t> encode_png(const Raster& img) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw FormatError("encode_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw FormatError("encode_png: png_create_info_struct failed");
    }

    std::vector<std::uint8_t> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("encode_png: libpng write error");
    }

    png_set_write_fn(png, &out, mem_write, mem_flush);
    const int color_type =
        img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, img.width, img.height, 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    for (int r = 0; r < img.height; ++r)
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + r * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Raster decode_png(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
        throw FormatError("decode_png: not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw FormatError("decode_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("decode_png: png_create_info_struct failed");
    }

    Raster img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("decode_png: corrupt PNG stream");
    }

    MemReader reader{bytes.data(), bytes.size(), 0};
    png_set_read_fn(png, &reader, mem_read);
    png_read_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    // The dataset formats are exactly 8-bit gray or 8-bit RGB; anything else
    // (palette, alpha, 16-bit) is rejected rather than converted.
    if (bit_depth != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("decode_png: bit depth " + std::to_string(bit_depth) +
                          ", expected 8");
    }
    if (color_type == PNG_COLOR_TYPE_GRAY) {
        img.channels = 1;
    } else if (color_type == PNG_COLOR_TYPE_RGB) {
        img.channels = 3;
    } else {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("decode_png: unsupported color type " +
                          std::to_string(color_type) +
                          " (expected 8-bit gray or RGB)");
    }

    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    img.pixels.resize(stride * img.height);
    rows.resize(img.height);
    for (int r = 0; r < img.height; ++r)
        rows[r] = img.pixels.data() + r * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

} // namespace

std::vector<std::uint8_t> encode_obs_image(const TrinaryMap& map) {
    Raster img;
    img.height = map.height();
    img.width = map.width();
    img.channels = 3;
    img.pixels.assign(static_cast<std::size_t>(img.height) * img.width * 3, 0);
    std::size_t i = 0;
    for (int r = 0; r < map.height(); ++r) {
        for (int c = 0; c < map.width(); ++c, i += 3) {
            switch (map(r, c)) {
                case CellState::Free: img.pixels[i + 2] = 255; break;      // blue
                case CellState::Uncertain: img.pixels[i + 1] = 255; break; // green
                case CellState::Obstacle: img.pixels[i + 0] = 255; break;  // red
            }
        }
    }
    return encode_png(img);
}

TrinaryMap decode_obs_image(const std::vector<std::uint8_t>& bytes) {
    const Raster img = decode_png(bytes);
    if (img.channels != 3)
        throw FormatError("decode_obs_image: expected 3 channels, got " +
                          std::to_string(img.channels));
    TrinaryMap map(img.height, img.width);
    std::size_t i = 0;
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c, i += 3) {
            const std::uint8_t red = img.pixels[i];
            const std::uint8_t green = img.pixels[i + 1];
            const std::uint8_t blue = img.pixels[i + 2];
            const int set255 = (red == 255) + (green == 255) + (blue == 255);
            const int nonzero = (red != 0) + (green != 0) + (blue != 0);
            if (set255 != 1 || nonzero != 1)
                throw FormatError("decode_obs_image: ambiguous pixel (" +
                                  std::to_string(r) + ", " + std::to_string(c) +
                                  ") rgb=(" + std::to_string(red) + "," +
                                  std::to_string(green) + "," +
                                  std::to_string(blue) + ")");
            if (blue == 255) map(r, c) = CellState::Free;
            else if (green == 255) map(r, c) = CellState::Uncertain;
            else map(r, c) = CellState::Obstacle;
        }
    }
    return map;
}

std::vector<std::uint8_t> encode_gt_image(const TrinaryMap& map) {
    Raster img;
    img.height = map.height();
    img.width = map.width();
    img.channels = 1;
    img.pixels.resize(static_cast<std::size_t>(img.height) * img.width);
    std::size_t i = 0;
    for (int r = 0; r < map.height(); ++r) {
        for (int c = 0; c < map.width(); ++c, ++i) {
            const CellState s = map(r, c);
            if (s == CellState::Uncertain)
                throw DomainError("encode_gt_image: Uncertain cell at (" +
                                  std::to_string(r) + ", " + std::to_string(c) +
                                  "); ground truth must be binary");
            img.pixels[i] = (s == CellState::Obstacle) ? 255 : 0;
        }
    }
    return encode_png(img);
}

TrinaryMap decode_gt_image(const std::vector<std::uint8_t>& bytes) {
    const Raster img = decode_png(bytes);
    if (img.channels != 1)
        throw FormatError("decode_gt_image: expected single channel, got " +
                          std::to_string(img.channels));
    TrinaryMap map(img.height, img.width);
    std::size_t i = 0;
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c, ++i) {
            const std::uint8_t v = img.pixels[i];
            if (v == 255) map(r, c) = CellState::Obstacle;
            else if (v == 0) map(r, c) = CellState::Free;
            else
                throw FormatError("decode_gt_image: pixel (" + std::to_string(r) +
                                  ", " + std::to_string(c) + ") value " +
                                  std::to_string(v) + " not in {0, 255}");
        }
    }
    return map;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_file: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read_file: read failure on " + path);
    return bytes;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_file: cannot open " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write_file: write failure on " + path);
}

TrinaryMap read_obs_image(const std::string& path) {
    try {
        return decode_obs_image(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

TrinaryMap read_gt_image(const std::string& path) {
    try {
        return decode_gt_image(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

void write_obs_image(const std::string& path, const TrinaryMap& map) {
    write_file(path, encode_obs_image(map));
}

void write_gt_image(const std::string& path, const TrinaryMap& map) {
    write_file(path, encode_gt_image(map));
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fnv1a64_hex(const std::vector<std::uint8_t>& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return std::string(buf);
}

} // namespace sensemap
