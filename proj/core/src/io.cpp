#include "repairlab/io.hpp"

#include <png.h>
#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace repairlab::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw std::runtime_error("cannot open file: " + path.string());
    return f;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png write failed: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(img.width()) * 3);
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            for (int ch = 0; ch < 3; ++ch) {
                const float v = std::clamp(img.at(r, c, ch), 0.0f, 1.0f);
                row[static_cast<std::size_t>(c) * 3 + ch] =
                    static_cast<png_byte>(std::lround(v * 255.0f));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
    auto file = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png read failed: " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    Image img(height, width);
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    for (int r = 0; r < height; ++r) {
        png_read_row(png, row.data(), nullptr);
        for (int c = 0; c < width; ++c) {
            for (int ch = 0; ch < 3; ++ch) {
                img.at(r, c, ch) = row[static_cast<std::size_t>(c) * 3 + ch] / 255.0f;
            }
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

Image tile_grid(const std::vector<std::vector<Image>>& rows, int pad) {
    if (rows.empty() || rows.front().empty()) throw std::invalid_argument("tile_grid: empty grid");
    const int h = rows.front().front().height();
    const int w = rows.front().front().width();
    std::size_t ncols = 0;
    for (const auto& row : rows) ncols = std::max(ncols, row.size());
    const int nr = static_cast<int>(rows.size());
    const int nc = static_cast<int>(ncols);
    Image out(nr * h + (nr + 1) * pad, nc * w + (nc + 1) * pad, 1.0f);
    for (int i = 0; i < nr; ++i) {
        for (int j = 0; j < static_cast<int>(rows[i].size()); ++j) {
            const Image& tile = rows[i][j];
            if (tile.height() != h || tile.width() != w)
                throw std::invalid_argument("tile_grid: tiles must share a shape");
            const int oy = pad + i * (h + pad);
            const int ox = pad + j * (w + pad);
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c)
                    for (int ch = 0; ch < 3; ++ch) out.at(oy + r, ox + c, ch) = tile.at(r, c, ch);
        }
    }
    return out;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void write_gzip_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // gzopen writes a fixed header (mtime 0, no name), so output bytes are reproducible.
    gzFile gz = gzopen(path.c_str(), "wb9");
    if (!gz) throw std::runtime_error("cannot write gzip file: " + path.string());
    const int written = text.empty() ? 0 : gzwrite(gz, text.data(), static_cast<unsigned>(text.size()));
    gzclose(gz);
    if (written != static_cast<int>(text.size()))
        throw std::runtime_error("gzip write failed: " + path.string());
}

std::string read_gzip_text(const std::filesystem::path& path) {
    gzFile gz = gzopen(path.c_str(), "rb");
    if (!gz) throw std::runtime_error("cannot open gzip file: " + path.string());
    std::string out;
    char buf[1 << 14];
    int n = 0;
    while ((n = gzread(gz, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
    gzclose(gz);
    if (n < 0) throw std::runtime_error("gzip read failed: " + path.string());
    return out;
}

std::string sha256_hex(std::span<const std::byte> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(std::string_view text) {
    return sha256_hex(std::as_bytes(std::span(text.data(), text.size())));
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        const auto line = text.substr(start, end - start);
        if (!line.empty() && line != "\r") rows.push_back(split_csv_line(line));
        start = end + 1;
    }
    return rows;
}

}  // namespace repairlab::io
