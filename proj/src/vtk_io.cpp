#include "fieldlens/vtk_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <memory>
#include <optional>
#include <sstream>

#include "fieldlens/error.hpp"
#include "fieldlens/text.hpp"

namespace fieldlens {

namespace {

constexpr std::size_t kMaxTitle = 256;

std::string upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Array names may not contain whitespace in the legacy format; spaces travel as %20.
std::string encode_name(std::string_view name) {
    std::string out;
    for (char c : name) {
        if (c == '%' || std::isspace(static_cast<unsigned char>(c))) {
            char buf[4];
            std::snprintf(buf, sizeof buf, "%%%02X", static_cast<unsigned char>(c));
            out += buf;
        } else {
            out += c;
        }
    }
    return out;
}

std::string decode_name(std::string_view name) {
    std::string out;
    for (std::size_t i = 0; i < name.size(); ++i) {
        if (name[i] == '%' && i + 2 < name.size()) {
            unsigned v = 0;
            auto [p, ec] = std::from_chars(name.data() + i + 1, name.data() + i + 3, v, 16);
            if (ec == std::errc() && p == name.data() + i + 3) {
                out += static_cast<char>(v);
                i += 2;
                continue;
            }
        }
        out += name[i];
    }
    return out;
}

/// Whitespace tokenizer over the body of the file that remembers line numbers.
class Tokens {
public:
    Tokens(std::string_view text, std::size_t first_line) : text_(text), line_(first_line) {}

    std::optional<std::string_view> next() {
        skip_space();
        if (pos_ >= text_.size()) return std::nullopt;
        const std::size_t start = pos_;
        token_line_ = line_;
        while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        return text_.substr(start, pos_ - start);
    }

    std::string_view expect(const char* what) {
        auto t = next();
        if (!t) throw ParseError(line_, std::string("unexpected end of file, expected ") + what);
        return *t;
    }

    void expect_keyword(std::string_view keyword) {
        auto t = expect(std::string(keyword).c_str());
        if (upper(t) != keyword) {
            throw ParseError(token_line_, "expected '" + std::string(keyword) + "', found '" + std::string(t) + "'");
        }
    }

    std::size_t expect_count(const char* what) {
        auto t = expect(what);
        std::size_t v = 0;
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || p != t.data() + t.size()) {
            throw ParseError(token_line_, std::string("invalid ") + what + " '" + std::string(t) + "'");
        }
        return v;
    }

    double expect_real(const char* what) {
        auto t = expect(what);
        double v = 0;
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || p != t.data() + t.size() || !std::isfinite(v)) {
            throw ParseError(token_line_, std::string("invalid ") + what + " '" + std::string(t) + "'");
        }
        return v;
    }

    std::size_t line() const noexcept { return token_line_; }

private:
    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            if (text_[pos_] == '\n') ++line_;
            ++pos_;
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_;
    std::size_t token_line_ = 0;
};

void check_value_type(Tokens& tok, std::string_view type) {
    static constexpr std::array<std::string_view, 11> kTypes{
        "bit", "char", "unsigned_char", "short", "unsigned_short", "int", "unsigned_int", "long", "unsigned_long",
        "float", "double"};
    std::string lower(type);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (std::find(kTypes.begin(), kTypes.end(), lower) == kTypes.end()) {
        throw ParseError(tok.line(), "unsupported data type '" + std::string(type) + "'");
    }
}

std::vector<double> read_values(Tokens& tok, std::size_t count, const char* what) {
    std::vector<double> out(count);
    for (auto& v : out) v = tok.expect_real(what);
    return out;
}

std::vector<DataArray> read_point_data(Tokens& tok, std::size_t npoints) {
    std::vector<DataArray> arrays;
    auto t = tok.next();
    if (!t) return arrays;
    if (upper(*t) != "POINT_DATA") {
        throw ParseError(tok.line(), "unsupported section '" + std::string(*t) + "'");
    }
    const std::size_t n = tok.expect_count("point count");
    if (n != npoints) {
        throw ParseError(tok.line(), "POINT_DATA " + std::to_string(n) + " does not match grid point count " +
                                         std::to_string(npoints));
    }
    while ((t = tok.next())) {
        const std::string kw = upper(*t);
        if (kw == "SCALARS") {
            const std::string name = decode_name(tok.expect("array name"));
            check_value_type(tok, tok.expect("data type"));
            // The component count is optional; peek for LOOKUP_TABLE instead.
            auto after = tok.expect("LOOKUP_TABLE");
            std::size_t k = 1;
            if (upper(after) != "LOOKUP_TABLE") {
                std::size_t parsed = 0;
                auto [p, ec] = std::from_chars(after.data(), after.data() + after.size(), parsed);
                if (ec != std::errc() || p != after.data() + after.size() || parsed < 1 || parsed > 4) {
                    throw ParseError(tok.line(), "invalid component count '" + std::string(after) + "'");
                }
                k = parsed;
                tok.expect_keyword("LOOKUP_TABLE");
            }
            auto table = tok.expect("lookup table name");
            if (table != "default") {
                throw ParseError(tok.line(), "only 'LOOKUP_TABLE default' is supported, found '" + std::string(table) + "'");
            }
            arrays.emplace_back(name, k, read_values(tok, n * k, "scalar value"));
        } else if (kw == "VECTORS") {
            const std::string name = decode_name(tok.expect("array name"));
            check_value_type(tok, tok.expect("data type"));
            arrays.emplace_back(name, 3, read_values(tok, n * 3, "vector component"));
        } else {
            throw ParseError(tok.line(), "unsupported section '" + std::string(*t) + "'");
        }
    }
    return arrays;
}

std::vector<double> read_coordinates(Tokens& tok, std::string_view keyword, std::size_t expected) {
    tok.expect_keyword(keyword);
    const std::size_t n = tok.expect_count("coordinate count");
    if (n != expected) {
        throw ParseError(tok.line(), std::string(keyword) + " has " + std::to_string(n) + " values but DIMENSIONS declares " +
                                         std::to_string(expected));
    }
    check_value_type(tok, tok.expect("data type"));
    return read_values(tok, n, "coordinate");
}

Dims3 read_dims(Tokens& tok) {
    Dims3 d{};
    for (auto& v : d) {
        v = tok.expect_count("dimension");
        if (v == 0) throw ParseError(tok.line(), "dimensions must be positive");
    }
    return d;
}

template <class F>
auto with_line(std::size_t line, F&& f) {
    try {
        return f();
    } catch (const PreconditionError& e) {
        throw ParseError(line, e.what());
    }
}

}  // namespace

ParsedFile parse_legacy(std::string_view text) {
    // The first three lines are line-oriented; the rest is a token stream.
    std::array<std::string_view, 3> header;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (pos >= text.size()) throw ParseError(i + 1, "file ends inside the header");
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        header[i] = text.substr(pos, nl - pos);
        if (!header[i].empty() && header[i].back() == '\r') header[i].remove_suffix(1);
        pos = std::min(nl + 1, text.size());
    }

    constexpr std::string_view kMagic = "# vtk DataFile Version ";
    if (header[0].substr(0, kMagic.size()) != kMagic) {
        throw ParseError(1, "missing '# vtk DataFile Version' header");
    }
    {
        const auto ver = trim(header[0].substr(kMagic.size()));
        double v = 0;
        auto [p, ec] = std::from_chars(ver.data(), ver.data() + ver.size(), v);
        if (ec != std::errc() || p != ver.data() + ver.size() || v < 2.0 || v > 4.2) {
            throw ParseError(1, "unsupported file version '" + std::string(ver) + "'");
        }
    }
    if (header[1].size() > kMaxTitle) throw ParseError(2, "title longer than 256 characters");
    const std::string format = upper(trim(header[2]));
    if (format == "BINARY") throw UnsupportedError("line 3: BINARY legacy files are unsupported");
    if (format != "ASCII") throw ParseError(3, "expected ASCII, found '" + std::string(header[2]) + "'");

    Tokens tok(text.substr(pos), 4);
    tok.expect_keyword("DATASET");
    const std::string kind = upper(tok.expect("dataset type"));

    ParsedFile out{ImageDataset({1, 1, 1}, {0, 0, 0}, {1, 1, 1}), std::string(header[1])};
    if (kind == "STRUCTURED_POINTS") {
        std::optional<Dims3> dims;
        std::optional<Vec3> origin, spacing;
        while (!dims || !origin || !spacing) {
            const std::string kw = upper(tok.expect("DIMENSIONS, ORIGIN or SPACING"));
            if (kw == "DIMENSIONS" && !dims) {
                dims = read_dims(tok);
            } else if (kw == "ORIGIN" && !origin) {
                origin = Vec3{tok.expect_real("origin"), tok.expect_real("origin"), tok.expect_real("origin")};
            } else if ((kw == "SPACING" || kw == "ASPECT_RATIO") && !spacing) {
                spacing = Vec3{tok.expect_real("spacing"), tok.expect_real("spacing"), tok.expect_real("spacing")};
            } else {
                throw ParseError(tok.line(), "unexpected '" + kw + "' in STRUCTURED_POINTS geometry");
            }
        }
        const std::size_t line = tok.line();
        const std::size_t n = (*dims)[0] * (*dims)[1] * (*dims)[2];
        auto arrays = read_point_data(tok, n);
        out.dataset = with_line(line, [&] { return ImageDataset(*dims, *origin, *spacing, std::move(arrays)); });
    } else if (kind == "RECTILINEAR_GRID") {
        tok.expect_keyword("DIMENSIONS");
        const Dims3 dims = read_dims(tok);
        auto x = read_coordinates(tok, "X_COORDINATES", dims[0]);
        auto y = read_coordinates(tok, "Y_COORDINATES", dims[1]);
        auto z = read_coordinates(tok, "Z_COORDINATES", dims[2]);
        const std::size_t line = tok.line();
        auto arrays = read_point_data(tok, dims[0] * dims[1] * dims[2]);
        out.dataset = with_line(line, [&] {
            return RectilinearDataset(std::move(x), std::move(y), std::move(z), std::move(arrays));
        });
    } else {
        throw ParseError(tok.line(), "unsupported dataset type '" + kind + "'");
    }
    return out;
}

std::string write_legacy(const GridDataset& dataset, std::string_view title) {
    std::string clean_title(title.substr(0, kMaxTitle));
    std::replace_if(clean_title.begin(), clean_title.end(), [](char c) { return c == '\n' || c == '\r'; }, ' ');

    std::ostringstream os;
    os << "# vtk DataFile Version 3.0\n" << clean_title << "\nASCII\n";
    const auto dims = grid_dims(dataset);
    if (const auto* img = std::get_if<ImageDataset>(&dataset)) {
        os << "DATASET STRUCTURED_POINTS\n";
        os << "DIMENSIONS " << dims[0] << ' ' << dims[1] << ' ' << dims[2] << '\n';
        os << "ORIGIN " << format_real(img->origin()[0]) << ' ' << format_real(img->origin()[1]) << ' '
           << format_real(img->origin()[2]) << '\n';
        os << "SPACING " << format_real(img->spacing()[0]) << ' ' << format_real(img->spacing()[1]) << ' '
           << format_real(img->spacing()[2]) << '\n';
    } else {
        const auto& grid = std::get<RectilinearDataset>(dataset);
        os << "DATASET RECTILINEAR_GRID\n";
        os << "DIMENSIONS " << dims[0] << ' ' << dims[1] << ' ' << dims[2] << '\n';
        const std::array<std::pair<const char*, const std::vector<double>*>, 3> axes{
            {{"X", &grid.x_coords()}, {"Y", &grid.y_coords()}, {"Z", &grid.z_coords()}}};
        for (const auto& [axis, coords] : axes) {
            os << axis << "_COORDINATES " << coords->size() << " double\n";
            for (std::size_t i = 0; i < coords->size(); ++i) {
                os << format_real((*coords)[i]) << (i + 1 == coords->size() ? '\n' : ' ');
            }
        }
    }

    const auto& arrays = point_arrays(dataset);
    if (!arrays.empty()) {
        os << "POINT_DATA " << num_points(dataset) << '\n';
        for (const auto& a : arrays) {
            if (a.components() == 3) {
                os << "VECTORS " << encode_name(a.name()) << " double\n";
            } else if (a.components() <= 4) {
                os << "SCALARS " << encode_name(a.name()) << " double " << a.components() << "\nLOOKUP_TABLE default\n";
            } else {
                throw UnsupportedError("array '" + a.name() + "' has " + std::to_string(a.components()) +
                                       " components; the legacy format allows at most 4");
            }
            for (std::size_t t = 0; t < a.tuples(); ++t) {
                auto tuple = a.tuple(t);
                for (std::size_t c = 0; c < tuple.size(); ++c) {
                    os << format_real(tuple[c]) << (c + 1 == tuple.size() ? '\n' : ' ');
                }
            }
        }
    }
    return os.str();
}

ImageDataset read_png(std::span<const std::uint8_t> bytes) {
    static constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    // Signature, then the IHDR chunk: length(4) type(4) width(4) height(4) depth(1) color(1).
    if (bytes.size() < 33 || std::memcmp(bytes.data(), kSignature, 8) != 0 ||
        std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) {
        throw ParseError(0, "not a PNG stream");
    }
    const int bit_depth = bytes[24];
    const int color_type = bytes[25];
    if (bit_depth != 8) {
        throw UnsupportedError("unsupported PNG bit depth " + std::to_string(bit_depth) + " (only 8-bit is supported)");
    }
    std::size_t k = 0;
    png_uint_32 format = 0;
    switch (color_type) {
        case 0: k = 1; format = PNG_FORMAT_GRAY; break;
        case 2: k = 3; format = PNG_FORMAT_RGB; break;
        case 6: k = 4; format = PNG_FORMAT_RGBA; break;
        case 3: k = 3; format = PNG_FORMAT_RGB; break;  // palette, expanded
        default:
            throw UnsupportedError("unsupported PNG color type " + std::to_string(color_type));
    }

    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw ParseError(0, std::string("corrupt PNG stream: ") + image.message);
    }
    if (color_type == 3 && (image.format & PNG_FORMAT_FLAG_ALPHA)) {
        k = 4;
        format = PNG_FORMAT_RGBA;
    }
    image.format = format;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
        png_image_free(&image);
        throw ParseError(0, std::string("corrupt PNG stream: ") + image.message);
    }

    const std::size_t w = image.width, h = image.height;
    std::vector<double> values(w * h * k);
    for (std::size_t row = 0; row < h; ++row) {
        const std::size_t y = h - 1 - row;
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < k; ++c) {
                values[(y * w + x) * k + c] = pixels[(row * w + x) * k + c];
            }
        }
    }
    return ImageDataset({w, h, 1}, {0, 0, 0}, {1, 1, 1}, {DataArray("pixels", k, std::move(values))});
}

std::vector<std::uint8_t> write_png(const ImageDataset& img, std::string_view array_name) {
    if (img.dims()[2] != 1) throw PreconditionError("PNG output needs a 2D image (nz = 1)");
    const DataArray* array = array_name.empty()
                                 ? (img.point_arrays().empty() ? nullptr : &img.point_arrays().front())
                                 : img.find_array(array_name);
    if (!array) throw PreconditionError("image has no array '" + std::string(array_name) + "' to write");
    const std::size_t k = array->components();
    png_uint_32 format = 0;
    switch (k) {
        case 1: format = PNG_FORMAT_GRAY; break;
        case 3: format = PNG_FORMAT_RGB; break;
        case 4: format = PNG_FORMAT_RGBA; break;
        default: throw PreconditionError("PNG output supports 1, 3 or 4 components, got " + std::to_string(k));
    }

    const std::size_t w = img.dims()[0], h = img.dims()[1];
    std::vector<std::uint8_t> pixels(w * h * k);
    for (std::size_t row = 0; row < h; ++row) {
        const std::size_t y = h - 1 - row;
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < k; ++c) {
                const double v = array->at(y * w + x, c);
                if (v < 0.0 || v > 255.0) {
                    throw PreconditionError("pixel value " + format_real(v) + " outside [0,255]");
                }
                pixels[(row * w + x) * k + c] = static_cast<std::uint8_t>(std::floor(v + 0.5));
            }
        }
    }

    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = format;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
        throw Error(std::string("PNG encoding failed: ") + image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
        throw Error(std::string("PNG encoding failed: ") + image.message);
    }
    out.resize(size);
    return out;
}

std::string write_csv(const TableDataset& table) {
    std::string out;
    const auto& cols = table.columns();
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out += cols[c].name;
        out += c + 1 == cols.size() ? "\n" : ",";
    }
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (const auto* nums = std::get_if<std::vector<double>>(&cols[c].data)) {
                out += format_real((*nums)[r]);
            } else {
                out += std::get<std::vector<std::string>>(cols[c].data)[r];
            }
            out += c + 1 == cols.size() ? "\n" : ",";
        }
    }
    return out;
}

GridDataset load_grid(const std::filesystem::path& path) {
    const std::string ext = upper(path.extension().string());
    if (ext == ".PNG") return read_png(read_binary_file(path));
    if (ext == ".VTK") return parse_legacy(read_text_file(path)).dataset;
    throw UnsupportedError("unknown dataset file type '" + path.extension().string() + "'");
}

void save_grid(const std::filesystem::path& path, const GridDataset& dataset) {
    const std::string ext = upper(path.extension().string());
    if (ext == ".PNG") {
        const auto* img = std::get_if<ImageDataset>(&dataset);
        if (!img) throw UnsupportedError("PNG output needs image data");
        write_file(path, write_png(*img));
    } else {
        write_file(path, write_legacy(dataset, path.stem().string()));
    }
}

}  // namespace fieldlens
