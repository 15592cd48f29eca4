#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sanet {

/// Interleaved 8-bit image, row-major. channels = 3 (RGB) or 1 (gray).
struct ImageU8 {
    int height = 0, width = 0, channels = 0;
    std::vector<std::uint8_t> data;

    ImageU8() = default;
    ImageU8(int h, int w, int c, std::uint8_t fill = 0)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {}

    std::uint8_t& at(int y, int x, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int y, int x, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

/// Binary pixel mask, 0/1 values.
struct Mask {
    int height = 0, width = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }

    std::size_t foreground_count() const {
        std::size_t n = 0;
        for (auto v : data) n += v != 0;
        return n;
    }
};

struct FormatError : std::runtime_error {
    std::size_t offset;
    FormatError(const std::string& msg, std::size_t off)
        : std::runtime_error(msg + " (at byte offset " + std::to_string(off) + ")"), offset(off) {}
};

namespace detail {

inline void skip_netpbm_whitespace(std::istream& in) {
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            while (c != '\n' && c != EOF) c = in.get();
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            in.get();
        } else {
            return;
        }
    }
}

inline int read_netpbm_int(std::istream& in, const char* what) {
    skip_netpbm_whitespace(in);
    int v;
    if (!(in >> v)) {
        auto pos = in.tellg();
        throw FormatError(std::string("netpbm: missing ") + what,
                          pos < 0 ? 0 : static_cast<std::size_t>(pos));
    }
    return v;
}

inline void read_netpbm_header(std::istream& in, const char* expected_magic, int& h, int& w) {
    char m0 = static_cast<char>(in.get());
    char m1 = static_cast<char>(in.get());
    if (m0 != expected_magic[0] || m1 != expected_magic[1]) {
        if (m0 == 'P' && (m1 == '2' || m1 == '3'))
            throw FormatError("netpbm: ASCII variants are not supported", 0);
        throw FormatError(std::string("netpbm: bad magic, expected ") + expected_magic, 0);
    }
    w = read_netpbm_int(in, "width");
    h = read_netpbm_int(in, "height");
    int maxval = read_netpbm_int(in, "maxval");
    if (maxval != 255) throw FormatError("netpbm: only maxval 255 is supported", 0);
    in.get();  // single whitespace byte before raster
}

}  // namespace detail

inline void save_ppm(const ImageU8& img, const std::string& path) {
    if (img.channels != 3) throw std::invalid_argument("save_ppm: image must have 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_ppm: cannot open " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size()));
    if (!out) throw std::runtime_error("save_ppm: write failed for " + path);
}

inline ImageU8 load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_ppm: cannot open " + path);
    int h, w;
    detail::read_netpbm_header(in, "P6", h, w);
    ImageU8 img(h, w, 3);
    in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.data.size())
        throw FormatError("load_ppm: truncated raster in " + path,
                          static_cast<std::size_t>(in.gcount()));
    return img;
}

inline void save_pgm(const Mask& mask, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_pgm: cannot open " + path);
    out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
    std::vector<std::uint8_t> raster(mask.data.size());
    for (std::size_t i = 0; i < raster.size(); ++i) raster[i] = mask.data[i] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(raster.data()),
              static_cast<std::streamsize>(raster.size()));
    if (!out) throw std::runtime_error("save_pgm: write failed for " + path);
}

inline Mask load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_pgm: cannot open " + path);
    int h, w;
    detail::read_netpbm_header(in, "P5", h, w);
    std::vector<std::uint8_t> raster(static_cast<std::size_t>(h) * w);
    in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
    if (static_cast<std::size_t>(in.gcount()) != raster.size())
        throw FormatError("load_pgm: truncated raster in " + path,
                          static_cast<std::size_t>(in.gcount()));
    Mask mask(h, w);
    for (std::size_t i = 0; i < raster.size(); ++i) mask.data[i] = raster[i] > 127 ? 1 : 0;
    return mask;
}

}  // namespace sanet
