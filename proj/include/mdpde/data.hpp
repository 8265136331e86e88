#pragma once

// CSV datasets, a small formula language for design matrices, the dataset
// manifest, and the bundled dataset presets with their outlier variants.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mdpde/errors.hpp"
#include "mdpde/families.hpp"
#include "mdpde/model.hpp"

namespace mdpde {

struct Dataset {
    std::string name;
    std::vector<std::string> columns;
    Eigen::MatrixXd values;  // rows x columns
    std::string provenance;

    Eigen::Index rows() const { return values.rows(); }

    Eigen::Index column_index(const std::string& col) const {
        const auto it = std::find(columns.begin(), columns.end(), col);
        if (it == columns.end()) throw InputError("unknown column '" + col + "' in dataset " + name);
        return static_cast<Eigen::Index>(it - columns.begin());
    }
    Eigen::VectorXd column(const std::string& col) const { return values.col(column_index(col)); }
};

// ---------------------------------------------------------------------------
// CSV.

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

struct CsvRecord {
    std::vector<std::string> fields;
    int line = 0;
};

/// RFC-4180 subset: comma separated, optional double quotes with "" escapes,
/// LF or CRLF line ends.  Blank lines are skipped.
inline std::vector<CsvRecord> parse_csv_records(const std::string& text, const std::string& source) {
    std::vector<CsvRecord> out;
    CsvRecord rec;
    std::string field;
    bool quoted = false, field_was_quoted = false, any = false;
    int line = 1;
    rec.line = 1;
    auto end_field = [&] {
        rec.fields.push_back(field_was_quoted ? field : trim(field));
        field.clear();
        field_was_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(rec.fields.size() == 1 && rec.fields[0].empty() && !any)) out.push_back(rec);
        rec = CsvRecord{};
        any = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            if (!trim(field).empty()) {
                throw InputError(source + ":" + std::to_string(line) + ": stray quote inside a field");
            }
            field.clear();
            quoted = true;
            field_was_quoted = true;
            any = true;
        } else if (c == ',') {
            end_field();
            any = true;
        } else if (c == '\n') {
            end_record();
            ++line;
            rec.line = line;
        } else {
            field.push_back(c);
            if (c != '\r' && c != ' ' && c != '\t') any = true;
        }
    }
    if (quoted) throw InputError(source + ": unterminated quoted field");
    if (!field.empty() || !rec.fields.empty() || any) end_record();
    return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
    std::string t = s;
    if (!t.empty() && t[0] == '+') t.erase(0, 1);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw InputError(where + ": not a number: '" + s + "'");
    }
    return v;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

/// Shortest decimal text that parses back to exactly v.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Fixed significant digits, for machine-readable outputs.
inline std::string format_sig(double v, int digits = 17) {
    if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
    return std::string(buf, res.ptr);
}

inline Dataset parse_dataset(const std::string& text, const std::string& name = "data") {
    const auto recs = detail::parse_csv_records(text, name);
    if (recs.empty()) throw InputError(name + ": missing header row");
    Dataset ds;
    ds.name = name;
    ds.columns = recs[0].fields;
    for (const auto& c : ds.columns) {
        if (c.empty()) throw InputError(name + ": empty column name in header");
        if (std::count(ds.columns.begin(), ds.columns.end(), c) > 1) {
            throw InputError(name + ": duplicate column '" + c + "'");
        }
    }
    const auto k = static_cast<Eigen::Index>(ds.columns.size());
    ds.values.resize(static_cast<Eigen::Index>(recs.size() - 1), k);
    for (std::size_t r = 1; r < recs.size(); ++r) {
        const auto& rec = recs[r];
        if (static_cast<Eigen::Index>(rec.fields.size()) != k) {
            throw InputError(name + ":" + std::to_string(rec.line) + ": expected " + std::to_string(k) +
                             " fields, found " + std::to_string(rec.fields.size()));
        }
        for (Eigen::Index j = 0; j < k; ++j) {
            const auto& cell = rec.fields[static_cast<std::size_t>(j)];
            const std::string where = name + ":" + std::to_string(rec.line) + ": column '" +
                                      ds.columns[static_cast<std::size_t>(j)] + "'";
            if (cell.empty()) throw InputError(where + ": missing value");
            ds.values(static_cast<Eigen::Index>(r - 1), j) = detail::parse_number(cell, where);
        }
    }
    return ds;
}

inline Dataset load_csv(const std::string& path, const std::string& name = "") {
    return parse_dataset(detail::read_file(path), name.empty() ? path : name);
}

inline std::string to_csv(const Dataset& ds) {
    std::ostringstream os;
    for (std::size_t j = 0; j < ds.columns.size(); ++j) os << (j ? "," : "") << ds.columns[j];
    os << '\n';
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        for (Eigen::Index j = 0; j < ds.values.cols(); ++j) os << (j ? "," : "") << format_double(ds.values(i, j));
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Formulas: "response ~ 1 + a + log(b) + scale(c,4) + a:scale(c,4)".

struct Term {
    enum class Kind { Intercept, Column, Log, Log10, Sqrt, Scale, Equal, AtLeast, Interaction };
    Kind kind = Kind::Column;
    std::string column;
    double constant = 0.0;
    std::vector<Term> factors;  // Interaction only

    static Term intercept() { return {Kind::Intercept, "", 0.0, {}}; }
    static Term col(std::string c) { return {Kind::Column, std::move(c), 0.0, {}}; }

    std::string label() const {
        switch (kind) {
            case Kind::Intercept: return "(Intercept)";
            case Kind::Column: return column;
            case Kind::Log: return "log(" + column + ")";
            case Kind::Log10: return "log10(" + column + ")";
            case Kind::Sqrt: return "sqrt(" + column + ")";
            case Kind::Scale: return "scale(" + column + "," + format_double(constant) + ")";
            case Kind::Equal: return "eq(" + column + "," + format_double(constant) + ")";
            case Kind::AtLeast: return "ge(" + column + "," + format_double(constant) + ")";
            case Kind::Interaction: {
                std::string s;
                for (std::size_t k = 0; k < factors.size(); ++k) s += (k ? ":" : "") + factors[k].label();
                return s;
            }
        }
        return {};
    }

    Eigen::VectorXd evaluate(const Dataset& ds) const {
        const auto n = ds.rows();
        switch (kind) {
            case Kind::Intercept: return Eigen::VectorXd::Ones(n);
            case Kind::Column: return ds.column(column);
            case Kind::Log:
            case Kind::Log10:
            case Kind::Sqrt: {
                Eigen::VectorXd v = ds.column(column);
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double x = v(i);
                    if (kind == Kind::Sqrt ? x < 0.0 : x <= 0.0) {
                        throw InputError(label() + " undefined at row " + std::to_string(i + 1));
                    }
                    v(i) = kind == Kind::Log ? std::log(x) : kind == Kind::Log10 ? std::log10(x) : std::sqrt(x);
                }
                return v;
            }
            case Kind::Scale: return ds.column(column) / constant;
            case Kind::Equal: return (ds.column(column).array() == constant).cast<double>();
            case Kind::AtLeast: return (ds.column(column).array() >= constant).cast<double>();
            case Kind::Interaction: {
                Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
                for (const auto& f : factors) v = v.cwiseProduct(f.evaluate(ds));
                return v;
            }
        }
        return {};
    }
};

struct FormulaSpec {
    Term response;
    std::vector<Term> terms;
    FamilyDescriptor family = FamilyDescriptor::poisson();
    std::string trials_column;  // Binomial only
    BinomialMode binomial_mode = BinomialMode::Grouped;
    std::vector<std::string> coef_names;  // optional display names, one per term
};

namespace detail {

inline Term parse_factor(const std::string& raw, const std::string& formula) {
    const std::string s = trim(raw);
    const auto bad = [&](const std::string& why) { return InputError("formula '" + formula + "': " + why); };
    if (s.empty()) throw bad("empty term");
    const auto open = s.find('(');
    if (open == std::string::npos) {
        if (s.find_first_of("),") != std::string::npos) throw bad("unbalanced term '" + s + "'");
        return Term::col(s);
    }
    if (s.back() != ')') throw bad("unbalanced term '" + s + "'");
    const std::string fn = trim(s.substr(0, open));
    const std::string inner = s.substr(open + 1, s.size() - open - 2);
    std::string col = inner, arg;
    const auto comma = inner.find(',');
    if (comma != std::string::npos) {
        col = inner.substr(0, comma);
        arg = inner.substr(comma + 1);
    }
    Term t;
    t.column = trim(col);
    if (t.column.empty()) throw bad("missing column in '" + s + "'");
    const bool needs_arg = fn == "scale" || fn == "eq" || fn == "ge";
    if (needs_arg != (comma != std::string::npos)) throw bad("wrong number of arguments in '" + s + "'");
    if (needs_arg) t.constant = parse_number(trim(arg), "formula '" + formula + "'");
    if (fn == "log") t.kind = Term::Kind::Log;
    else if (fn == "log10") t.kind = Term::Kind::Log10;
    else if (fn == "sqrt") t.kind = Term::Kind::Sqrt;
    else if (fn == "scale") t.kind = Term::Kind::Scale;
    else if (fn == "eq") t.kind = Term::Kind::Equal;
    else if (fn == "ge") t.kind = Term::Kind::AtLeast;
    else throw bad("unknown transform '" + fn + "'");
    if (t.kind == Term::Kind::Scale && t.constant == 0.0) throw bad("scale by zero");
    return t;
}

inline std::vector<std::string> split_top(const std::string& s, char sep) {
    std::vector<std::string> parts;
    int depth = 0;
    std::string cur;
    for (char c : s) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == sep && depth == 0) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    return parts;
}

}  // namespace detail

/// Parses "response ~ term + term ..." into the response and ordered terms.
inline void parse_formula(const std::string& formula, FormulaSpec& out) {
    const auto tilde = formula.find('~');
    if (tilde == std::string::npos) throw InputError("formula '" + formula + "': missing '~'");
    out.response = detail::parse_factor(formula.substr(0, tilde), formula);
    out.terms.clear();
    for (const auto& part : detail::split_top(formula.substr(tilde + 1), '+')) {
        const std::string p = detail::trim(part);
        if (p == "1") {
            out.terms.push_back(Term::intercept());
            continue;
        }
        const auto factors = detail::split_top(p, ':');
        if (factors.size() == 1) {
            out.terms.push_back(detail::parse_factor(p, formula));
        } else {
            Term t;
            t.kind = Term::Kind::Interaction;
            for (const auto& f : factors) t.factors.push_back(detail::parse_factor(f, formula));
            out.terms.push_back(t);
        }
    }
    for (std::size_t a = 0; a < out.terms.size(); ++a) {
        for (std::size_t b = a + 1; b < out.terms.size(); ++b) {
            if (out.terms[a].label() == out.terms[b].label()) {
                throw InputError("formula '" + formula + "': duplicate term " + out.terms[a].label());
            }
        }
    }
}

inline FormulaSpec parse_formula(const std::string& formula) {
    FormulaSpec f;
    parse_formula(formula, f);
    return f;
}

/// Assembles X column by column in term order, plus y and trials.
inline ModelSpec build_model(const Dataset& ds, const FormulaSpec& f) {
    if (f.terms.empty()) throw InputError("formula has no terms");
    ModelSpec spec;
    spec.family = f.family;
    spec.binomial_mode = f.binomial_mode;
    const auto n = ds.rows();
    spec.X.resize(n, static_cast<Eigen::Index>(f.terms.size()));
    for (std::size_t j = 0; j < f.terms.size(); ++j) {
        spec.X.col(static_cast<Eigen::Index>(j)) = f.terms[j].evaluate(ds);
        spec.coef_names.push_back(j < f.coef_names.size() ? f.coef_names[j] : f.terms[j].label());
    }
    spec.y = f.response.evaluate(ds);
    if (f.family.kind == FamilyKind::Binomial) {
        if (f.trials_column.empty()) throw InputError("binomial formula needs a trials column");
        const Eigen::VectorXd m = ds.column(f.trials_column);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (m(i) != std::floor(m(i)) || m(i) < 1.0) {
                throw InputError("trials must be positive integers (row " + std::to_string(i + 1) + ")");
            }
            spec.trials.push_back(static_cast<int>(m(i)));
        }
    }
    return spec;
}

inline FamilyDescriptor family_from_name(const std::string& name) {
    if (name == "poisson") return FamilyDescriptor::poisson();
    if (name == "bernoulli" || name == "logistic") return FamilyDescriptor::bernoulli();
    if (name == "binomial") return FamilyDescriptor::binomial(1);
    if (name == "gaussian") return FamilyDescriptor::gaussian();
    throw InputError("unknown family '" + name + "'");
}

// ---------------------------------------------------------------------------
// Manifest and presets.

struct ManifestEntry {
    std::string name;
    std::string path;  // relative to the manifest directory
    std::string sha256;
    std::string family;
    std::string trials;
    std::string binomial_mode;
    std::string formula;
    std::vector<std::string> coef_names;
    std::string provenance;
};

inline std::vector<ManifestEntry> parse_manifest(const std::string& text) {
    const auto recs = detail::parse_csv_records(text, "manifest");
    if (recs.empty()) throw InputError("manifest: missing header");
    const std::vector<std::string> expected{"name",          "path",    "sha256",     "family",    "trials",
                                            "binomial_mode", "formula", "coef_names", "provenance"};
    if (recs[0].fields != expected) throw InputError("manifest: unexpected header");
    std::vector<ManifestEntry> out;
    for (std::size_t r = 1; r < recs.size(); ++r) {
        const auto& f = recs[r].fields;
        if (f.size() != expected.size()) {
            throw InputError("manifest:" + std::to_string(recs[r].line) + ": wrong number of fields");
        }
        ManifestEntry e{f[0], f[1], f[2], f[3], f[4], f[5], f[6], {}, f[8]};
        std::stringstream ss(f[7]);
        std::string name;
        while (std::getline(ss, name, ';')) e.coef_names.push_back(name);
        out.push_back(e);
    }
    return out;
}

inline std::vector<ManifestEntry> load_manifest(const std::string& data_dir) {
    return parse_manifest(detail::read_file(data_dir + "/manifest.csv"));
}

inline const ManifestEntry& find_entry(const std::vector<ManifestEntry>& entries, const std::string& name) {
    for (const auto& e : entries) {
        if (e.name == name) return e;
    }
    throw InputError("unknown dataset '" + name + "'");
}

inline FormulaSpec preset_formula(const ManifestEntry& e) {
    FormulaSpec f = parse_formula(e.formula);
    f.family = family_from_name(e.family);
    f.trials_column = e.trials;
    f.binomial_mode = e.binomial_mode == "replicated" ? BinomialMode::ReplicatedBernoulli : BinomialMode::Grouped;
    f.coef_names = e.coef_names;
    return f;
}

inline Dataset load_entry(const ManifestEntry& e, const std::string& data_dir) {
    auto ds = load_csv(data_dir + "/" + e.path, e.name);
    ds.provenance = e.provenance;
    return ds;
}

namespace detail {

inline Dataset drop_rows(const Dataset& ds, std::vector<Eigen::Index> rows_1based) {
    std::sort(rows_1based.begin(), rows_1based.end());
    Dataset out = ds;
    out.values.resize(ds.rows() - static_cast<Eigen::Index>(rows_1based.size()), ds.values.cols());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        if (std::binary_search(rows_1based.begin(), rows_1based.end(), i + 1)) continue;
        out.values.row(k++) = ds.values.row(i);
    }
    return out;
}

}  // namespace detail

/// Names of the variants available for a dataset; the first is the unmodified data.
inline std::vector<std::string> dataset_variant_names(const std::string& name) {
    if (name == "aids") return {"clean", "one_outlier", "two_outliers"};
    if (name == "leukemia") return {"clean", "without_outlier"};
    if (name == "skin") return {"clean", "without_outliers"};
    return {"clean"};
}

/// Modified copy of a bundled dataset.
///  aids: one_outlier sets row 1 to 10 cases; two_outliers also sets row 20 to 15.
///  leukemia: without_outlier drops the long survivor with WBC 100000 (row 17 of the
///  bundled file, the 15th observation in the original listing).
///  skin: without_outliers drops rows 4 and 18.
inline Dataset dataset_variant(const Dataset& ds, const std::string& name, const std::string& variant) {
    const auto names = dataset_variant_names(name);
    if (std::find(names.begin(), names.end(), variant) == names.end()) {
        throw InputError("unknown variant '" + variant + "' for dataset " + name);
    }
    if (variant == "clean") return ds;
    Dataset out = ds;
    out.name = name + "/" + variant;
    if (name == "aids") {
        const auto c = ds.column_index("cases");
        if (ds.rows() != 20) throw InputError("aids variants expect 20 rows");
        out.values(0, c) = 10.0;
        if (variant == "two_outliers") out.values(19, c) = 15.0;
    } else if (name == "leukemia") {
        out = detail::drop_rows(ds, {17});
    } else if (name == "skin") {
        out = detail::drop_rows(ds, {4, 18});
    }
    out.name = name + "/" + variant;
    return out;
}

struct Preset {
    Dataset data;
    FormulaSpec formula;
    ModelSpec spec;
};

/// Bundled dataset, optional variant, and its model.
inline Preset load_preset(const std::string& data_dir, const std::string& name, const std::string& variant = "clean") {
    const auto entries = load_manifest(data_dir);
    const auto& e = find_entry(entries, name);
    Preset p;
    p.data = dataset_variant(load_entry(e, data_dir), name, variant);
    p.formula = preset_formula(e);
    p.spec = build_model(p.data, p.formula);
    return p;
}

}  // namespace mdpde
