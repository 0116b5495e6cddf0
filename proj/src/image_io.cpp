#include "outfitgan/data/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "outfitgan/core/errors.hpp"

namespace outfitgan::data {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char to_u8(float x) {
    float u = std::round((x + 1.0f) * 127.5f);
    if (u < 0.0f) u = 0.0f;
    if (u > 255.0f) u = 255.0f;
    return static_cast<unsigned char>(u);
}

void write_png(const std::string& path, const FeatureMap<float>& img, int color_type) {
    const int nch = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
    if (img.channels != nch) throw ShapeError("png write: channel count mismatch");

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png write error: " + path);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * nch);
    for (Index y = 0; y < img.height; ++y) {
        for (Index x = 0; x < img.width; ++x)
            for (int c = 0; c < nch; ++c) row[static_cast<std::size_t>(x * nch + c)] = to_u8(img.data(c, y * img.width + x));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

FeatureMap<float> read_png(const std::string& path, int want_channels) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open for reading: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png read error: " + path);
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    // Normalize everything to 8-bit RGB or gray.
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (want_channels == 3 && (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA))
        png_set_gray_to_rgb(png);
    if (want_channels == 1 && (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
                               color == PNG_COLOR_TYPE_PALETTE))
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != static_cast<std::size_t>(w) * want_channels) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unexpected png layout: " + path);
    }

    FeatureMap<float> out(want_channels, static_cast<Index>(h), static_cast<Index>(w));
    std::vector<unsigned char> row(rowbytes);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < want_channels; ++c)
                out.data(c, static_cast<Index>(y) * out.width + static_cast<Index>(x)) =
                    static_cast<float>(row[x * static_cast<png_uint_32>(want_channels) + static_cast<png_uint_32>(c)]) / 127.5f - 1.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace

void write_png_rgb(const std::string& path, const FeatureMap<float>& image) {
    write_png(path, image, PNG_COLOR_TYPE_RGB);
}

FeatureMap<float> read_png_rgb(const std::string& path) { return read_png(path, 3); }

void write_png_gray(const std::string& path, const FeatureMap<float>& mask) {
    // Masks hold {0,1}; widen to {-1,+1} so the shared u8 mapping lands on 0/255.
    FeatureMap<float> wide(1, mask.height, mask.width);
    wide.data = mask.data * 2.0f - MatX<float>::Ones(mask.data.rows(), mask.data.cols());
    write_png(path, wide, PNG_COLOR_TYPE_GRAY);
}

FeatureMap<float> read_png_gray(const std::string& path) {
    FeatureMap<float> raw = read_png(path, 1);
    FeatureMap<float> out(1, raw.height, raw.width);
    for (Index i = 0; i < raw.data.size(); ++i) out.data.data()[i] = raw.data.data()[i] > 0.0f ? 1.0f : 0.0f;
    return out;
}

}  // namespace outfitgan::data
