#include "mdcgan/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include <jpeglib.h>
#include <png.h>

namespace mdcgan {

namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageIoError("cannot open image " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image from_interleaved(const unsigned char* rgb, std::size_t h, std::size_t w) {
    Image img(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = rgb[(y * w + x) * 3 + c];
    return img;
}

Image decode_png(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw ImageIoError("invalid PNG " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw ImageIoError("failed decoding PNG " + path.string() + ": " + msg);
    }
    return from_interleaved(rgb.data(), image.height, image.width);
}

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegError*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

Image decode_jpeg(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
    jpeg_decompress_struct cinfo;
    JpegError err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    // Everything touched after setjmp lives outside this frame's locals or is POD.
    std::vector<unsigned char> rgb;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw ImageIoError("invalid JPEG " + path.string() + ": " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const std::size_t w = cinfo.output_width, h = cinfo.output_height;
    rgb.resize(w * h * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return from_interleaved(rgb.data(), h, w);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

unsigned char to_byte(float value) {
    if (!(value >= 0.0f)) return 0;  // also catches NaN
    if (value >= 255.0f) return 255;
    return static_cast<unsigned char>(std::floor(value + 0.5f));
}

Image read_image(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) return decode_png(bytes, path);
    if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) return decode_jpeg(bytes, path);
    throw ImageIoError("unrecognized image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.height == 0 || image.width == 0 || image.values.size() != 3 * image.plane())
        throw ImageIoError("cannot write an empty or malformed image to " + path.string());
    std::vector<unsigned char> rgb(image.values.size());
    for (std::size_t y = 0; y < image.height; ++y)
        for (std::size_t x = 0; x < image.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) rgb[(y * image.width + x) * 3 + c] = to_byte(image.at(c, y, x));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

    png_image out;
    std::memset(&out, 0, sizeof out);
    out.version = PNG_IMAGE_VERSION;
    out.width = static_cast<png_uint_32>(image.width);
    out.height = static_cast<png_uint_32>(image.height);
    out.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&out, path.c_str(), 0, rgb.data(), 0, nullptr))
        throw ImageIoError("failed writing PNG " + path.string() + ": " + out.message);
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ImageIoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = lower(entry.path().extension().string());
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace mdcgan
