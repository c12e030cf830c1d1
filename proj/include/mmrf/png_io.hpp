#pragma once

#include "mmrf/core.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

// Minimal grayscale/multichannel PNG IO on libpng. Frames are 16-bit grayscale
// containers holding raw mosaicked values right-aligned in the low bits;
// masks and weight maps are 8-bit grayscale.

namespace mmrf {

struct IoError : Error {
    explicit IoError(const std::string& m) : Error(m) {}
};

struct Image16 {
    int width = 0, height = 0, channels = 1;
    std::vector<std::uint16_t> data;  // row-major, interleaved

    std::uint16_t at(int row, int col, int ch = 0) const {
        return data[(std::size_t(row) * width + col) * channels + ch];
    }
    std::uint16_t& at(int row, int col, int ch = 0) {
        return data[(std::size_t(row) * width + col) * channels + ch];
    }
};

struct Image8 {
    int width = 0, height = 0;
    std::vector<std::uint8_t> data;

    std::uint8_t at(int row, int col) const { return data[std::size_t(row) * width + col]; }
    std::uint8_t& at(int row, int col) { return data[std::size_t(row) * width + col]; }
};

namespace detail {
struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

inline void write_png16(const std::string& path, const Image16& img) {
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    int color = PNG_COLOR_TYPE_GRAY;
    if (img.channels == 2) color = PNG_COLOR_TYPE_GRAY_ALPHA;
    else if (img.channels == 3) color = PNG_COLOR_TYPE_RGB;
    else if (img.channels == 4) color = PNG_COLOR_TYPE_RGB_ALPHA;
    else if (img.channels != 1) throw IoError("write_png16: unsupported channel count");
    png_set_IHDR(png, info, img.width, img.height, 16, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_set_swap(png);  // in-memory little endian
    std::vector<png_bytep> rows(img.height);
    for (int r = 0; r < img.height; ++r)
        rows[r] = reinterpret_cast<png_bytep>(
            const_cast<std::uint16_t*>(img.data.data() + std::size_t(r) * img.width * img.channels));
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline Image16 read_png16(const std::string& path) {
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png read failed: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth < 16) png_set_expand_16(png);
    png_set_swap(png);
    png_read_update_info(png, info);
    Image16 img;
    img.width = int(png_get_image_width(png, info));
    img.height = int(png_get_image_height(png, info));
    img.channels = int(png_get_channels(png, info));
    img.data.assign(std::size_t(img.width) * img.height * img.channels, 0);
    std::vector<png_bytep> rows(img.height);
    for (int r = 0; r < img.height; ++r)
        rows[r] = reinterpret_cast<png_bytep>(img.data.data() +
                                              std::size_t(r) * img.width * img.channels);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

inline void write_png8(const std::string& path, const Image8& img) {
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int r = 0; r < img.height; ++r)
        rows[r] = const_cast<png_bytep>(img.data.data() + std::size_t(r) * img.width);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline Image8 read_png8(const std::string& path) {
    Image16 img16 = read_png16(path);
    Image8 img;
    img.width = img16.width;
    img.height = img16.height;
    img.data.resize(std::size_t(img.width) * img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = std::uint8_t(img16.data[i * img16.channels] >> 8);
    return img;
}

// Float binary maps (depth, normals): little header then raw 32-bit floats.
inline void write_float_map(const std::string& path, int width, int height, int channels,
                            const std::vector<float>& data) {
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open for write: " + path);
    const char magic[8] = {'F', 'M', 'A', 'P', '0', '1', 0, 0};
    std::fwrite(magic, 1, 8, fp.get());
    std::int32_t dims[3] = {width, height, channels};
    std::fwrite(dims, 4, 3, fp.get());
    std::fwrite(data.data(), 4, data.size(), fp.get());
}

inline std::vector<float> read_float_map(const std::string& path, int& width, int& height,
                                         int& channels) {
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open: " + path);
    char magic[8];
    if (std::fread(magic, 1, 8, fp.get()) != 8 || std::memcmp(magic, "FMAP01", 6) != 0)
        throw IoError("bad float map header: " + path);
    std::int32_t dims[3];
    if (std::fread(dims, 4, 3, fp.get()) != 3) throw IoError("bad float map dims: " + path);
    width = dims[0];
    height = dims[1];
    channels = dims[2];
    std::vector<float> data(std::size_t(width) * height * channels);
    if (std::fread(data.data(), 4, data.size(), fp.get()) != data.size())
        throw IoError("truncated float map: " + path);
    return data;
}

}  // namespace mmrf
