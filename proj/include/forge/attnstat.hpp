#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace forge::attn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// One attention matrix per response: rows are answer tokens, columns are all tokens.
template <typename Scalar>
struct AttentionDump {
    std::string model_name;
    std::vector<Eigen::Index> image_indices; // sorted, unique, within [0, total_tokens)
    Matrix<Scalar> matrix;
    nlohmann::json metadata = nlohmann::json::object(); // e.g. which layers and heads were averaged

    Eigen::Index answer_tokens() const { return matrix.rows(); }
    Eigen::Index total_tokens() const { return matrix.cols(); }
};

struct ValidationError : std::runtime_error {
    ValidationError(const std::string& what, std::optional<Eigen::Index> row = std::nullopt)
        : std::runtime_error(what), row(row) {}
    std::optional<Eigen::Index> row;
};

inline constexpr double kRowSumTolerance = 1e-4;

template <typename Scalar>
void validate(const AttentionDump<Scalar>& d, double tolerance = kRowSumTolerance) {
    if (d.answer_tokens() < 1) throw ValidationError("dump has no answer tokens");
    for (std::size_t k = 0; k < d.image_indices.size(); ++k) {
        const auto j = d.image_indices[k];
        if (j < 0 || j >= d.total_tokens())
            throw ValidationError("image token index " + std::to_string(j) + " outside [0, " +
                                  std::to_string(d.total_tokens()) + ")");
        if (k > 0 && j <= d.image_indices[k - 1]) throw ValidationError("image token indices must be sorted and unique");
    }
    for (Eigen::Index i = 0; i < d.answer_tokens(); ++i) {
        const auto row = d.matrix.row(i);
        if (!row.allFinite() || (row.array() < Scalar(0)).any())
            throw ValidationError("row " + std::to_string(i) + " has negative or non-finite entries", i);
        const double sum = static_cast<double>(row.sum());
        if (std::fabs(sum - 1.0) > tolerance)
            throw ValidationError("row " + std::to_string(i) + " sums to " + std::to_string(sum) + ", expected 1", i);
    }
}

template <typename Scalar>
struct AttentionSummary {
    std::string model_name;
    Vector<Scalar> totals; // per answer token: attention mass on image tokens
    Vector<Scalar> means;  // per image token: mean over answer tokens
    Scalar grand_mean = 0; // mean of totals
};

inline constexpr double kIdentityTolerance = 1e-9;

/// Validates, then computes per-token totals, per-image-token means and the grand mean.
template <typename Scalar>
AttentionSummary<Scalar> summarize(const AttentionDump<Scalar>& d) {
    validate(d);
    AttentionSummary<Scalar> s;
    s.model_name = d.model_name;
    const Matrix<Scalar> image = d.matrix(Eigen::all, d.image_indices);
    if (image.cols() == 0) {
        s.totals = Vector<Scalar>::Zero(d.answer_tokens());
        s.means = Vector<Scalar>(0);
        s.grand_mean = 0;
        return s;
    }
    s.totals = image.rowwise().sum();
    s.means = image.colwise().mean().transpose();
    s.grand_mean = s.totals.mean();
    const double gap = std::fabs(static_cast<double>(s.grand_mean - s.means.sum()));
    const double tol = std::max(kIdentityTolerance, 1e3 * static_cast<double>(std::numeric_limits<Scalar>::epsilon()));
    if (gap > tol)
        throw std::logic_error("attention summary identity violated by " + std::to_string(gap));
    return s;
}

template <typename Scalar>
struct Comparison {
    std::string a_model;
    std::string b_model;
    Scalar grand_mean_difference = 0; // a - b
    std::string higher;               // "a", "b" or "tie"
    std::optional<Vector<Scalar>> per_token_deltas; // a - b, only when both have the same answer length
    std::string note;
};

template <typename Scalar>
Comparison<Scalar> compare(const AttentionSummary<Scalar>& a, const AttentionSummary<Scalar>& b) {
    Comparison<Scalar> c;
    c.a_model = a.model_name;
    c.b_model = b.model_name;
    c.grand_mean_difference = a.grand_mean - b.grand_mean;
    c.higher = c.grand_mean_difference > 0 ? "a" : c.grand_mean_difference < 0 ? "b" : "tie";
    if (a.totals.size() == b.totals.size()) c.per_token_deltas = a.totals - b.totals;
    else c.note = "answer lengths differ (" + std::to_string(a.totals.size()) + " vs " + std::to_string(b.totals.size()) +
                  "); only the aggregate comparison is reported";
    return c;
}

template <typename Scalar>
std::vector<double> to_std(const Vector<Scalar>& v) {
    std::vector<double> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(v[i]);
    return out;
}

template <typename Scalar>
nlohmann::json to_json(const AttentionSummary<Scalar>& s) {
    return {{"model_name", s.model_name},
            {"answer_tokens", s.totals.size()},
            {"image_tokens", s.means.size()},
            {"totals", to_std(s.totals)},
            {"means", to_std(s.means)},
            {"grand_mean", static_cast<double>(s.grand_mean)}};
}

template <typename Scalar>
nlohmann::json to_json(const Comparison<Scalar>& c) {
    nlohmann::json j = {{"a", c.a_model},
                        {"b", c.b_model},
                        {"grand_mean_difference", static_cast<double>(c.grand_mean_difference)},
                        {"higher_image_attention", c.higher == "a" ? c.a_model : c.higher == "b" ? c.b_model : "tie"}};
    if (c.per_token_deltas) j["per_token_deltas"] = to_std(*c.per_token_deltas);
    if (!c.note.empty()) j["note"] = c.note;
    return j;
}

// ---- dump files ----
// JSON: {"format": "attn/v1", "model_name", "answer_tokens", "total_tokens", "image_token_indices": [...],
//        "data": [row-major A*T numbers], "metadata": {...}}
// Binary (little-endian): "ATTN1\0\0\0", u64 A, u64 T, u64 |I|, u32 name length, name, u32 metadata length,
//        metadata JSON, |I| x u64 indices, A*T x f64 row-major.

inline constexpr char kBinaryMagic[8] = {'A', 'T', 'T', 'N', '1', 0, 0, 0};

template <typename Scalar>
nlohmann::json dump_to_json(const AttentionDump<Scalar>& d) {
    std::vector<double> data(static_cast<std::size_t>(d.matrix.size()));
    for (Eigen::Index i = 0; i < d.matrix.rows(); ++i)
        for (Eigen::Index j = 0; j < d.matrix.cols(); ++j)
            data[static_cast<std::size_t>(i * d.matrix.cols() + j)] = static_cast<double>(d.matrix(i, j));
    return {{"format", "attn/v1"},
            {"model_name", d.model_name},
            {"answer_tokens", d.answer_tokens()},
            {"total_tokens", d.total_tokens()},
            {"image_token_indices", d.image_indices},
            {"data", data},
            {"metadata", d.metadata}};
}

template <typename Scalar>
AttentionDump<Scalar> dump_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "attn/v1") throw ValidationError("not an attn/v1 dump");
    AttentionDump<Scalar> d;
    d.model_name = j.value("model_name", "");
    const auto a = j.at("answer_tokens").get<Eigen::Index>();
    const auto t = j.at("total_tokens").get<Eigen::Index>();
    if (a < 0 || t < 0) throw ValidationError("negative dimensions");
    d.image_indices = j.at("image_token_indices").get<std::vector<Eigen::Index>>();
    const auto& data = j.at("data");
    if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != a * t)
        throw ValidationError("data has " + std::to_string(data.size()) + " values, expected " + std::to_string(a * t));
    d.matrix.resize(a, t);
    for (Eigen::Index k = 0; k < a * t; ++k) d.matrix(k / t, k % t) = static_cast<Scalar>(data[k].get<double>());
    if (j.contains("metadata")) d.metadata = j["metadata"];
    return d;
}

namespace detail {

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw ValidationError("truncated binary dump");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

} // namespace detail

template <typename Scalar>
std::string dump_to_binary(const AttentionDump<Scalar>& d) {
    static_assert(sizeof(double) == 8);
    std::string out(kBinaryMagic, sizeof kBinaryMagic);
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(d.answer_tokens()));
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(d.total_tokens()));
    detail::put<std::uint64_t>(out, d.image_indices.size());
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d.model_name.size()));
    out += d.model_name;
    const auto meta = d.metadata.dump();
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
    out += meta;
    for (auto i : d.image_indices) detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(i));
    for (Eigen::Index i = 0; i < d.matrix.rows(); ++i)
        for (Eigen::Index j = 0; j < d.matrix.cols(); ++j) detail::put<double>(out, static_cast<double>(d.matrix(i, j)));
    return out;
}

template <typename Scalar>
AttentionDump<Scalar> dump_from_binary(const std::string& in) {
    if (in.size() < sizeof kBinaryMagic || std::memcmp(in.data(), kBinaryMagic, sizeof kBinaryMagic) != 0)
        throw ValidationError("missing ATTN1 magic");
    std::size_t pos = sizeof kBinaryMagic;
    AttentionDump<Scalar> d;
    const auto a = detail::get<std::uint64_t>(in, pos);
    const auto t = detail::get<std::uint64_t>(in, pos);
    const auto ni = detail::get<std::uint64_t>(in, pos);
    const auto name_len = detail::get<std::uint32_t>(in, pos);
    if (pos + name_len > in.size()) throw ValidationError("truncated binary dump");
    d.model_name = in.substr(pos, name_len);
    pos += name_len;
    const auto meta_len = detail::get<std::uint32_t>(in, pos);
    if (pos + meta_len > in.size()) throw ValidationError("truncated binary dump");
    d.metadata = nlohmann::json::parse(in.substr(pos, meta_len));
    pos += meta_len;
    const auto expected = pos + ni * 8 + a * t * 8;
    if (a > (1ull << 32) || t > (1ull << 32) || expected != in.size())
        throw ValidationError("binary dump size does not match its header");
    for (std::uint64_t k = 0; k < ni; ++k)
        d.image_indices.push_back(static_cast<Eigen::Index>(detail::get<std::uint64_t>(in, pos)));
    d.matrix.resize(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(t));
    for (std::uint64_t k = 0; k < a * t; ++k)
        d.matrix(static_cast<Eigen::Index>(k / t), static_cast<Eigen::Index>(k % t)) =
            static_cast<Scalar>(detail::get<double>(in, pos));
    return d;
}

/// Reads either format, detected by the binary magic.
template <typename Scalar = double>
AttentionDump<Scalar> load_dump(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string bytes = ss.str();
    if (bytes.size() >= sizeof kBinaryMagic && std::memcmp(bytes.data(), kBinaryMagic, sizeof kBinaryMagic) == 0)
        return dump_from_binary<Scalar>(bytes);
    return dump_from_json<Scalar>(nlohmann::json::parse(bytes));
}

template <typename Scalar>
void save_dump(const std::filesystem::path& path, const AttentionDump<Scalar>& d, bool binary) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    if (binary) f << dump_to_binary(d);
    else f << dump_to_json(d).dump() << '\n';
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

} // namespace forge::attn
