#pragma once

// Tabular dataset, CSV ingestion, balance-sheet KPIs and the two dataset
// splitters used by the pipeline (out-of-time by year, stratified by class).

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "creditrisk/core.hpp"

namespace creditrisk {

enum class FeatureKind { Numeric, Categorical, Embedding };

inline std::string to_string(FeatureKind k) {
    switch (k) {
        case FeatureKind::Numeric: return "numeric";
        case FeatureKind::Categorical: return "categorical";
        case FeatureKind::Embedding: return "embedding";
    }
    return "numeric";
}

inline FeatureKind feature_kind_from_string(std::string_view s) {
    if (s == "numeric") return FeatureKind::Numeric;
    if (s == "categorical") return FeatureKind::Categorical;
    if (s == "embedding") return FeatureKind::Embedding;
    throw ConfigError("unknown feature kind '" + std::string(s) + "'");
}

// Row-major store. Categorical columns hold integer codes (as doubles) into
// `dictionaries[col]`; other columns have an empty dictionary.
struct Dataset {
    Matrix features;
    std::vector<std::string> feature_names;
    std::vector<FeatureKind> feature_kinds;
    std::vector<std::vector<std::string>> dictionaries;
    std::vector<int> target;
    std::vector<int> year;
    // Position of each row in the originally loaded or generated table.
    // Survives splits, so disjointness between partitions can be checked.
    std::vector<std::uint64_t> row_id;

    std::size_t n_rows() const noexcept { return target.size(); }
    std::size_t n_cols() const noexcept { return feature_names.size(); }

    std::optional<std::size_t> column_index(std::string_view name) const {
        for (std::size_t j = 0; j < feature_names.size(); ++j)
            if (feature_names[j] == name) return j;
        return std::nullopt;
    }

    std::size_t positives() const {
        return static_cast<std::size_t>(std::count(target.begin(), target.end(), 1));
    }

    // Throws DomainError when a structural invariant is broken.
    void check() const {
        const std::size_t n = target.size();
        if (year.size() != n || row_id.size() != n)
            throw DomainError("dataset: per-row columns disagree in length");
        if (features.rows() != n && !(n == 0 && features.rows() == 0))
            throw DomainError("dataset: feature rows disagree with target length");
        if (n > 0 && features.cols() != feature_names.size())
            throw DomainError("dataset: feature width disagrees with names");
        if (feature_kinds.size() != feature_names.size() ||
            dictionaries.size() != feature_names.size())
            throw DomainError("dataset: column metadata length mismatch");
        for (int t : target)
            if (t != 0 && t != 1) throw DomainError("dataset: target must be 0/1");
        std::unordered_set<std::string> seen;
        for (const auto& name : feature_names)
            if (!seen.insert(name).second)
                throw DomainError("dataset: duplicate feature name '" + name + "'");
        for (std::size_t j = 0; j < feature_names.size(); ++j) {
            if (feature_kinds[j] != FeatureKind::Categorical) continue;
            for (std::size_t r = 0; r < n; ++r) {
                const double v = features(r, j);
                if (is_missing(v)) continue;
                if (v < 0 || v != std::floor(v) ||
                    static_cast<std::size_t>(v) >= dictionaries[j].size())
                    throw DomainError("dataset: bad categorical code in '" + feature_names[j] + "'");
            }
        }
    }

    Dataset subset(std::span<const std::size_t> rows) const {
        Dataset out;
        out.features = features.select_rows(rows);
        if (rows.empty()) out.features = Matrix(0, n_cols());
        out.feature_names = feature_names;
        out.feature_kinds = feature_kinds;
        out.dictionaries = dictionaries;
        out.target.reserve(rows.size());
        out.year.reserve(rows.size());
        out.row_id.reserve(rows.size());
        for (std::size_t r : rows) {
            out.target.push_back(target[r]);
            out.year.push_back(year[r]);
            out.row_id.push_back(row_id[r]);
        }
        return out;
    }

    Dataset select_columns(std::span<const std::size_t> cols) const {
        Dataset out;
        out.features = features.select_cols(cols);
        for (std::size_t c : cols) {
            out.feature_names.push_back(feature_names[c]);
            out.feature_kinds.push_back(feature_kinds[c]);
            out.dictionaries.push_back(dictionaries[c]);
        }
        out.target = target;
        out.year = year;
        out.row_id = row_id;
        return out;
    }

    Dataset select_columns(const std::vector<std::string>& names) const {
        std::vector<std::size_t> cols;
        for (const auto& n : names) {
            auto idx = column_index(n);
            if (!idx) throw DomainError("dataset: no column named '" + n + "'");
            cols.push_back(*idx);
        }
        return select_columns(std::span<const std::size_t>(cols));
    }

    void add_column(std::string name, FeatureKind kind, std::span<const double> values,
                    std::vector<std::string> dictionary = {}) {
        if (values.size() != n_rows()) throw DimensionError("add_column: length mismatch");
        if (column_index(name)) throw DomainError("add_column: duplicate name '" + name + "'");
        Matrix grown(n_rows(), n_cols() + 1);
        for (std::size_t r = 0; r < n_rows(); ++r) {
            for (std::size_t j = 0; j < n_cols(); ++j) grown(r, j) = features(r, j);
            grown(r, n_cols()) = values[r];
        }
        features = std::move(grown);
        feature_names.push_back(std::move(name));
        feature_kinds.push_back(kind);
        dictionaries.push_back(std::move(dictionary));
    }
};

// Row-wise concatenation; both sides must share column metadata.
inline Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.feature_names != b.feature_names) throw DomainError("concat: column names differ");
    Dataset out = a;
    for (std::size_t r = 0; r < b.n_rows(); ++r) out.features.append_row(b.features.row(r));
    if (out.features.rows() == 0) out.features = Matrix(0, a.n_cols());
    out.target.insert(out.target.end(), b.target.begin(), b.target.end());
    out.year.insert(out.year.end(), b.year.begin(), b.year.end());
    out.row_id.insert(out.row_id.end(), b.row_id.begin(), b.row_id.end());
    return out;
}

// ----------------------------------------------------------------------------
// CSV
// ----------------------------------------------------------------------------

namespace csv {

// RFC-4180 record reader: quoted fields, doubled quotes, embedded newlines,
// CRLF or LF line endings.
class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    // Returns false at end of input.
    bool next(std::vector<std::string>& fields) {
        fields.clear();
        if (in_.peek() == std::char_traits<char>::eof()) return false;
        std::string field;
        bool quoted = false;
        bool any = false;
        char ch;
        while (in_.get(ch)) {
            any = true;
            if (quoted) {
                if (ch == '"') {
                    if (in_.peek() == '"') {
                        in_.get(ch);
                        field.push_back('"');
                    } else {
                        quoted = false;
                    }
                } else {
                    if (ch == '\n') ++line_;
                    field.push_back(ch);
                }
                continue;
            }
            if (ch == '"') {
                quoted = true;
            } else if (ch == ',') {
                fields.push_back(std::move(field));
                field.clear();
            } else if (ch == '\r') {
                if (in_.peek() == '\n') in_.get(ch);
                ++line_;
                fields.push_back(std::move(field));
                return true;
            } else if (ch == '\n') {
                ++line_;
                fields.push_back(std::move(field));
                return true;
            } else {
                field.push_back(ch);
            }
        }
        if (quoted) throw IngestionError("csv: unterminated quoted field near line " + std::to_string(line_ + 1));
        if (any) fields.push_back(std::move(field));
        return any;
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::istream& in_;
    std::size_t line_ = 0;
};

inline std::string quote(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
    if (is_missing(v)) return "";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

}  // namespace csv

enum class ColumnRole { Feature, Target, Year, RowId, Ignore };

struct ColumnDecl {
    std::string name;
    ColumnRole role = ColumnRole::Feature;
    FeatureKind kind = FeatureKind::Numeric;
};

using Schema = std::vector<ColumnDecl>;

// Parses "name:kind,name:kind,..." where kind is numeric, categorical,
// embedding, target, year, row_id or ignore.
inline Schema parse_schema(std::string_view text) {
    Schema schema;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find(',', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view item = text.substr(pos, end - pos);
        if (!item.empty()) {
            const auto colon = item.rfind(':');
            if (colon == std::string_view::npos)
                throw ConfigError("schema entry '" + std::string(item) + "' lacks ':kind'");
            ColumnDecl d;
            d.name = std::string(item.substr(0, colon));
            const std::string_view kind = item.substr(colon + 1);
            if (kind == "target") d.role = ColumnRole::Target;
            else if (kind == "year") d.role = ColumnRole::Year;
            else if (kind == "row_id") d.role = ColumnRole::RowId;
            else if (kind == "ignore") d.role = ColumnRole::Ignore;
            else d.kind = feature_kind_from_string(kind);
            schema.push_back(std::move(d));
        }
        pos = end + 1;
    }
    return schema;
}

inline Dataset load_csv(std::istream& in, const Schema& schema) {
    csv::Reader reader(in);
    std::vector<std::string> header;
    if (!reader.next(header)) throw IngestionError("csv: empty input, no header row");
    if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);
    // Leading '#' lines carry provenance comments.
    while (!header.empty() && header[0].starts_with("#"))
        if (!reader.next(header)) throw IngestionError("csv: no header row after comment lines");

    std::unordered_map<std::string, const ColumnDecl*> decl_by_name;
    for (const auto& d : schema) decl_by_name[d.name] = &d;
    if (header.size() != schema.size())
        throw IngestionError("csv: header has " + std::to_string(header.size()) +
                             " columns, schema declares " + std::to_string(schema.size()));

    Dataset ds;
    std::vector<int> feature_slot(header.size(), -1);
    int target_col = -1, year_col = -1, id_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        auto it = decl_by_name.find(header[c]);
        if (it == decl_by_name.end())
            throw IngestionError("csv: header column '" + header[c] + "' not declared in schema");
        const ColumnDecl& d = *it->second;
        switch (d.role) {
            case ColumnRole::Target: target_col = static_cast<int>(c); break;
            case ColumnRole::Year: year_col = static_cast<int>(c); break;
            case ColumnRole::RowId: id_col = static_cast<int>(c); break;
            case ColumnRole::Ignore: break;
            case ColumnRole::Feature:
                feature_slot[c] = static_cast<int>(ds.feature_names.size());
                ds.feature_names.push_back(d.name);
                ds.feature_kinds.push_back(d.kind);
                ds.dictionaries.emplace_back();
                break;
        }
    }
    if (target_col < 0) throw IngestionError("csv: schema declares no target column");
    if (year_col < 0) throw IngestionError("csv: schema declares no year column");

    std::vector<std::unordered_map<std::string, std::size_t>> codes(ds.feature_names.size());
    std::vector<double> row(ds.feature_names.size());
    std::vector<std::string> fields;
    std::size_t record = 1;
    ds.features = Matrix(0, ds.feature_names.size());
    while (reader.next(fields)) {
        ++record;
        if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
        if (fields.size() != header.size())
            throw IngestionError("csv: row " + std::to_string(record) + " has " +
                                 std::to_string(fields.size()) + " fields, expected " +
                                 std::to_string(header.size()));
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const std::string& tok = fields[c];
            if (static_cast<int>(c) == target_col) {
                auto v = csv::parse_double(tok);
                if (!v || (*v != 0.0 && *v != 1.0))
                    throw IngestionError("csv: row " + std::to_string(record) +
                                         ": target must be 0 or 1, got '" + tok + "'");
                ds.target.push_back(static_cast<int>(*v));
            } else if (static_cast<int>(c) == year_col) {
                auto v = csv::parse_double(tok);
                if (!v || *v != std::floor(*v))
                    throw IngestionError("csv: row " + std::to_string(record) +
                                         ": year must be an integer, got '" + tok + "'");
                ds.year.push_back(static_cast<int>(*v));
            } else if (static_cast<int>(c) == id_col) {
                std::uint64_t id = 0;
                auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), id);
                if (ec != std::errc() || p != tok.data() + tok.size())
                    throw IngestionError("csv: row " + std::to_string(record) + ": bad row id '" + tok + "'");
                ds.row_id.push_back(id);
            } else if (feature_slot[c] >= 0) {
                const auto j = static_cast<std::size_t>(feature_slot[c]);
                if (tok.empty()) {
                    row[j] = kMissing;
                } else if (ds.feature_kinds[j] == FeatureKind::Categorical) {
                    auto [it, inserted] = codes[j].try_emplace(tok, ds.dictionaries[j].size());
                    if (inserted) ds.dictionaries[j].push_back(tok);
                    row[j] = static_cast<double>(it->second);
                } else {
                    auto v = csv::parse_double(tok);
                    if (!v)
                        throw IngestionError("csv: row " + std::to_string(record) + ", column '" +
                                             header[c] + "': non-numeric token '" + tok + "'");
                    row[j] = *v;
                }
            }
        }
        ds.features.append_row(row);
        if (id_col < 0) ds.row_id.push_back(ds.row_id.size());
    }
    ds.check();
    return ds;
}

inline Dataset load_csv(const std::string& path, const Schema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("csv: cannot open '" + path + "'");
    return load_csv(in, schema);
}

// Schema matching what write_csv emits for this dataset.
inline Schema schema_of(const Dataset& ds, bool with_row_id = false, const std::string& target_name = "default",
                        const std::string& year_name = "year") {
    Schema s;
    for (std::size_t j = 0; j < ds.n_cols(); ++j)
        s.push_back({ds.feature_names[j], ColumnRole::Feature, ds.feature_kinds[j]});
    s.push_back({target_name, ColumnRole::Target, FeatureKind::Numeric});
    s.push_back({year_name, ColumnRole::Year, FeatureKind::Numeric});
    if (with_row_id) s.push_back({"row_id", ColumnRole::RowId, FeatureKind::Numeric});
    return s;
}

inline std::string schema_to_string(const Schema& s) {
    std::string out;
    for (const auto& d : s) {
        if (!out.empty()) out += ',';
        out += d.name + ':';
        switch (d.role) {
            case ColumnRole::Target: out += "target"; break;
            case ColumnRole::Year: out += "year"; break;
            case ColumnRole::RowId: out += "row_id"; break;
            case ColumnRole::Ignore: out += "ignore"; break;
            case ColumnRole::Feature: out += to_string(d.kind); break;
        }
    }
    return out;
}

inline void write_csv(std::ostream& out, const Dataset& ds, bool with_row_id = false,
                      const std::string& target_name = "default", const std::string& year_name = "year") {
    for (std::size_t j = 0; j < ds.n_cols(); ++j) out << csv::quote(ds.feature_names[j]) << ',';
    out << csv::quote(target_name) << ',' << csv::quote(year_name);
    if (with_row_id) out << ",row_id";
    out << '\n';
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        for (std::size_t j = 0; j < ds.n_cols(); ++j) {
            const double v = ds.features(r, j);
            if (ds.feature_kinds[j] == FeatureKind::Categorical && !is_missing(v))
                out << csv::quote(ds.dictionaries[j][static_cast<std::size_t>(v)]);
            else
                out << csv::format_double(v);
            out << ',';
        }
        out << ds.target[r] << ',' << ds.year[r];
        if (with_row_id) out << ',' << ds.row_id[r];
        out << '\n';
    }
}

inline void write_csv(const std::string& path, const Dataset& ds, bool with_row_id = false) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("csv: cannot write '" + path + "'");
    write_csv(out, ds, with_row_id);
}

// ----------------------------------------------------------------------------
// KPIs
// ----------------------------------------------------------------------------

using Date = std::chrono::year_month_day;

// Parses YYYY-MM-DD; nullopt when malformed or not a calendar date.
inline std::optional<Date> parse_date(std::string_view s) {
    int y = 0;
    unsigned m = 0, d = 0;
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    auto num = [&](std::size_t pos, std::size_t len, auto& dst) {
        auto r = std::from_chars(s.data() + pos, s.data() + pos + len, dst);
        return r.ec == std::errc() && r.ptr == s.data() + pos + len;
    };
    if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) return std::nullopt;
    Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) return std::nullopt;
    return date;
}

// Balance-sheet fields needed by the KPI set. Absent values are kMissing.
struct BalanceSheetRow {
    double cashAndMarketableSecurities = kMissing;
    double totalAccountsReceivable = kMissing;
    double totalCurrentLiabilities = kMissing;
    double totalSales = kMissing;
    double totalCurrentAssets = kMissing;
    double ebitda = kMissing;
    double totalInterestExpense = kMissing;
    double totalLiabilities = kMissing;
    double netWorth = kMissing;
    double netIncome = kMissing;
    double totalAmortizationAndDepreciaton = kMissing;
    double depreciationExpense = kMissing;
    double workingCapital = kMissing;
    double totalInventory = kMissing;
    double totalLongTermDebt = kMissing;
    double longTermDebtCurrentMaturities = kMissing;
    double totalOperatingProfit = kMissing;
    double totalAssets = kMissing;
    std::optional<Date> financialStatementDate;
    std::optional<Date> incorporationDate;

    void check() const {
        if (financialStatementDate && !financialStatementDate->ok())
            throw DomainError("financialStatementDate is not a calendar date");
        if (incorporationDate && !incorporationDate->ok())
            throw DomainError("incorporationDate is not a calendar date");
        if (financialStatementDate && incorporationDate &&
            std::chrono::sys_days(*financialStatementDate) < std::chrono::sys_days(*incorporationDate))
            throw DomainError("financialStatementDate precedes incorporationDate");
    }
};

namespace detail {
inline double safe_ratio(double num, double den) {
    if (is_missing(num) || is_missing(den) || den == 0.0) return kMissing;
    return num / den;
}
}  // namespace detail

// Names in the order compute_kpis emits them.
inline const std::vector<std::string>& kpi_names() {
    static const std::vector<std::string> names = {
        "ACID", "ACTIVITY", "AGE", "ASSET_TURNOVER", "CURRENT_RATIO", "DEBT_COVERAGE",
        "DEBT_EQUITY", "EBITDA_RATIO", "FFO", "IND_ROTA", "IND_STRUTT", "INVENTORY_TURNOVER",
        "LEVERAGE_1", "LEVERAGE_2", "LONG-TERM-DEBT_EQUITY", "NETINCOME_RATIO", "PFN", "ROA",
        "ROE", "ROI", "SHORT-TERM-DEBT_EQUITY"};
    return names;
}

// Missing operands and zero denominators both yield kMissing.
inline std::map<std::string, double> compute_kpis(const BalanceSheetRow& b) {
    using detail::safe_ratio;
    std::map<std::string, double> k;
    const double pfn = b.totalLongTermDebt + b.longTermDebtCurrentMaturities - b.cashAndMarketableSecurities;
    const double ffo = b.netIncome + b.totalAmortizationAndDepreciaton + b.depreciationExpense;

    k["ACID"] = safe_ratio(b.cashAndMarketableSecurities + b.totalAccountsReceivable, b.totalCurrentLiabilities);
    k["ACTIVITY"] = safe_ratio(b.totalCurrentLiabilities, b.totalSales);
    if (b.financialStatementDate && b.incorporationDate) {
        const auto days = (std::chrono::sys_days(*b.financialStatementDate) -
                           std::chrono::sys_days(*b.incorporationDate)).count();
        k["AGE"] = static_cast<double>(days) / 365.0;
    } else {
        k["AGE"] = kMissing;
    }
    k["ASSET_TURNOVER"] = safe_ratio(b.totalSales, b.totalAssets);
    k["CURRENT_RATIO"] = safe_ratio(b.totalCurrentAssets, b.totalCurrentLiabilities);
    k["DEBT_COVERAGE"] = safe_ratio(b.ebitda, b.totalInterestExpense);
    k["DEBT_EQUITY"] = safe_ratio(b.totalLiabilities, b.netWorth);
    k["EBITDA_RATIO"] = safe_ratio(b.ebitda, b.totalSales);
    k["FFO"] = ffo;
    k["IND_ROTA"] = safe_ratio(b.workingCapital, b.totalSales);
    k["IND_STRUTT"] = safe_ratio(pfn, b.netWorth);
    k["INVENTORY_TURNOVER"] = safe_ratio(b.totalInventory, b.totalSales);
    k["LEVERAGE_1"] = safe_ratio(pfn, b.ebitda);
    k["LEVERAGE_2"] = safe_ratio(ffo, pfn);
    k["LONG-TERM-DEBT_EQUITY"] = safe_ratio(b.totalLongTermDebt, b.netWorth);
    k["NETINCOME_RATIO"] = safe_ratio(b.netIncome, b.totalSales);
    k["PFN"] = pfn;
    k["ROA"] = safe_ratio(b.netIncome, b.totalAssets);
    k["ROE"] = safe_ratio(b.netIncome, b.netWorth);
    k["ROI"] = safe_ratio(b.totalOperatingProfit, b.totalAssets);
    k["SHORT-TERM-DEBT_EQUITY"] = safe_ratio(b.totalCurrentLiabilities, b.netWorth);
    for (auto& [name, v] : k)
        if (!std::isfinite(v)) v = kMissing;
    return k;
}

// Reads a raw balance-sheet CSV (one column per BalanceSheetRow field, dates
// ISO-8601, extra columns ignored) into rows.
inline std::vector<BalanceSheetRow> load_balance_sheets(std::istream& in) {
    csv::Reader reader(in);
    std::vector<std::string> header, fields;
    if (!reader.next(header)) throw IngestionError("balance sheet csv: empty input");
    std::vector<BalanceSheetRow> rows;
    std::size_t record = 1;
    while (reader.next(fields)) {
        ++record;
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (fields.size() != header.size())
            throw IngestionError("balance sheet csv: row " + std::to_string(record) + " has wrong length");
        BalanceSheetRow b;
        for (std::size_t c = 0; c < header.size(); ++c) {
            const auto& name = header[c];
            const auto& tok = fields[c];
            if (name == "financialStatementDate" || name == "incorporationDate") {
                std::optional<Date> d;
                if (!tok.empty()) {
                    d = parse_date(tok);
                    if (!d)
                        throw IngestionError("balance sheet csv: row " + std::to_string(record) +
                                             ": bad date '" + tok + "'");
                }
                (name == "financialStatementDate" ? b.financialStatementDate : b.incorporationDate) = d;
                continue;
            }
            double* slot = nullptr;
#define CREDITRISK_FIELD(f) if (name == #f) slot = &b.f;
            CREDITRISK_FIELD(cashAndMarketableSecurities)
            CREDITRISK_FIELD(totalAccountsReceivable)
            CREDITRISK_FIELD(totalCurrentLiabilities)
            CREDITRISK_FIELD(totalSales)
            CREDITRISK_FIELD(totalCurrentAssets)
            CREDITRISK_FIELD(ebitda)
            CREDITRISK_FIELD(totalInterestExpense)
            CREDITRISK_FIELD(totalLiabilities)
            CREDITRISK_FIELD(netWorth)
            CREDITRISK_FIELD(netIncome)
            CREDITRISK_FIELD(totalAmortizationAndDepreciaton)
            CREDITRISK_FIELD(depreciationExpense)
            CREDITRISK_FIELD(workingCapital)
            CREDITRISK_FIELD(totalInventory)
            CREDITRISK_FIELD(totalLongTermDebt)
            CREDITRISK_FIELD(longTermDebtCurrentMaturities)
            CREDITRISK_FIELD(totalOperatingProfit)
            CREDITRISK_FIELD(totalAssets)
#undef CREDITRISK_FIELD
            if (!slot || tok.empty()) continue;
            auto v = csv::parse_double(tok);
            if (!v)
                throw IngestionError("balance sheet csv: row " + std::to_string(record) + ", column '" +
                                     name + "': non-numeric token '" + tok + "'");
            *slot = *v;
        }
        b.check();
        rows.push_back(b);
    }
    return rows;
}

// Clips every numeric column to its [lo_pct, hi_pct] empirical percentiles
// (nearest-rank). Missing cells are left alone.
inline void clip_percentiles(Dataset& ds, double lo_pct, double hi_pct) {
    if (!(0.0 <= lo_pct && lo_pct < hi_pct && hi_pct <= 100.0))
        throw ConfigError("clip_percentiles: need 0 <= lo < hi <= 100");
    for (std::size_t j = 0; j < ds.n_cols(); ++j) {
        if (ds.feature_kinds[j] != FeatureKind::Numeric) continue;
        std::vector<double> vals;
        for (std::size_t r = 0; r < ds.n_rows(); ++r)
            if (!is_missing(ds.features(r, j))) vals.push_back(ds.features(r, j));
        if (vals.empty()) continue;
        std::sort(vals.begin(), vals.end());
        auto at = [&](double pct) {
            const double pos = pct / 100.0 * static_cast<double>(vals.size() - 1);
            return vals[static_cast<std::size_t>(std::llround(pos))];
        };
        const double lo = at(lo_pct), hi = at(hi_pct);
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            double& v = ds.features(r, j);
            if (!is_missing(v)) v = std::clamp(v, lo, hi);
        }
    }
}

// ----------------------------------------------------------------------------
// Splits
// ----------------------------------------------------------------------------

struct SplitSpec {
    int oot_year = 2017;
    double test_fraction = 0.2;
    std::uint64_t seed = 42;

    void check() const {
        if (!(test_fraction > 0.0 && test_fraction < 1.0))
            throw ConfigError("split: test_fraction must lie strictly between 0 and 1");
    }
};

struct Split {
    Dataset first;
    Dataset second;
    std::vector<std::string> warnings;
};

// Rows before oot_year go first, rows of oot_year second. Rows after oot_year
// are dropped and reported in warnings.
inline Split split_out_of_time(const Dataset& ds, int oot_year) {
    std::vector<std::size_t> before, at;
    std::size_t after = 0;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        if (ds.year[r] < oot_year) before.push_back(r);
        else if (ds.year[r] == oot_year) at.push_back(r);
        else ++after;
    }
    if (at.empty())
        throw SplitError("split_out_of_time: year " + std::to_string(oot_year) + " absent from data");
    if (before.empty())
        throw SplitError("split_out_of_time: no rows before year " + std::to_string(oot_year));
    Split s{ds.subset(before), ds.subset(at), {}};
    if (after > 0)
        s.warnings.push_back(std::to_string(after) + " rows after year " + std::to_string(oot_year) +
                             " rejected");
    return s;
}

// Per class, round(fraction * class_count) rows go to the second part.
inline Split stratified_split(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw SplitError("stratified_split: fraction must lie strictly between 0 and 1");
    Rng rng(seed);
    std::vector<std::size_t> first, second;
    std::vector<std::string> warnings;
    for (int cls : {0, 1}) {
        std::vector<std::size_t> idx;
        for (std::size_t r = 0; r < ds.n_rows(); ++r)
            if (ds.target[r] == cls) idx.push_back(r);
        if (idx.size() < 2)
            throw SplitError("stratified_split: class " + std::to_string(cls) + " has " +
                             std::to_string(idx.size()) + " rows, need at least 2");
        rng.shuffle(idx);
        const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        if (take == 0)
            warnings.push_back("stratified_split: class " + std::to_string(cls) +
                               " contributes no rows to the second part");
        second.insert(second.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
        first.insert(first.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
    }
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    return {ds.subset(first), ds.subset(second), std::move(warnings)};
}

}  // namespace creditrisk
