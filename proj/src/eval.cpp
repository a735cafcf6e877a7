// SPDX-License-Identifier: Apache-2.0
#include <kgq/error.hpp>
#include <kgq/eval.hpp>
#include <kgq/text.hpp>
#include <kgq/vector_index.hpp>

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace kgq
{

using json = nlohmann::json;

namespace
{

constexpr std::string_view xsd = "http://www.w3.org/2001/XMLSchema#";

bool is_xsd(std::string_view datatype, std::string_view local)
{
    return datatype.size() == xsd.size() + local.size() && datatype.starts_with(xsd) && datatype.substr(xsd.size()) == local;
}

bool numeric_datatype(std::string_view dt)
{
    static const char* const names[] = { "integer",
                                         "decimal",
                                         "double",
                                         "float",
                                         "int",
                                         "long",
                                         "short",
                                         "byte",
                                         "nonNegativeInteger",
                                         "positiveInteger",
                                         "negativeInteger",
                                         "nonPositiveInteger",
                                         "unsignedInt",
                                         "unsignedLong",
                                         "unsignedShort",
                                         "unsignedByte" };
    return std::ranges::any_of(names, [&](const char* n) { return is_xsd(dt, n); });
}

std::optional<double> parse_number(std::string_view text)
{
    text = trim(text);
    if (!text.empty() && text.front() == '+')
        text.remove_prefix(1);
    if (text.empty())
        return std::nullopt;
    double value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value))
        return std::nullopt;
    return value == 0 ? 0.0 : value;
}

struct DatePoint
{
    std::string year;
    int month = 0;
    int day = 0;
    int precision = 1; // 1 year, 2 month, 3 day
};

bool all_digits(std::string_view s)
{
    return !s.empty() && std::ranges::all_of(s, [](char c) { return c >= '0' && c <= '9'; });
}

std::optional<DatePoint> parse_date(const Cell& cell)
{
    auto const& dt = cell.datatype;
    if (!is_xsd(dt, "date") && !is_xsd(dt, "dateTime") && !is_xsd(dt, "gYear") && !is_xsd(dt, "gYearMonth"))
        return std::nullopt;
    std::string_view text = trim(cell.lexical);
    if (auto t = text.find('T'); t != std::string_view::npos)
        text = text.substr(0, t);
    bool negative = false;
    if (!text.empty() && (text.front() == '-' || text.front() == '+'))
    {
        negative = text.front() == '-';
        text.remove_prefix(1);
    }
    auto parts = split(text, '-');
    // gYear and date may carry a timezone like "2020Z" or "2020-05-01+02:00"
    if (!parts.empty())
    {
        auto& last = parts.back();
        while (!last.empty() && !(last.back() >= '0' && last.back() <= '9'))
            last.remove_suffix(1);
        if (auto plus = last.find('+'); plus != std::string_view::npos)
            last = last.substr(0, plus);
        if (last.size() > 2 && parts.size() > 1 && is_xsd(dt, "date"))
            last = last.substr(0, 2);
    }
    if (parts.empty() || !all_digits(parts[0]))
        return std::nullopt;
    DatePoint d;
    auto year = parts[0];
    while (year.size() > 1 && year.front() == '0')
        year.remove_prefix(1);
    d.year = (negative ? "-" : "") + std::string(year);
    if (parts.size() >= 2 && all_digits(parts[1]))
    {
        d.month = std::stoi(std::string(parts[1]));
        d.precision = 2;
    }
    if (parts.size() >= 3 && all_digits(parts[2]))
    {
        d.day = std::stoi(std::string(parts[2]));
        d.precision = 3;
    }
    return d;
}

std::string date_key(const DatePoint& d)
{
    char buf[32];
    if (d.precision == 1)
        return d.year;
    if (d.precision == 2)
        std::snprintf(buf, sizeof buf, "-%02d", d.month);
    else
        std::snprintf(buf, sizeof buf, "-%02d-%02d", d.month, d.day);
    return d.year + buf;
}

std::string number_key(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// A cell prepared for repeated comparison.
struct Value
{
    CellKind kind = CellKind::Unbound;
    std::string text;
    std::optional<double> number;
    std::optional<DatePoint> date;
};

Value prepare(const Cell& c)
{
    Value v { c.kind, c.lexical, std::nullopt, std::nullopt };
    if (c.kind != CellKind::Literal)
        return v;
    v.date = parse_date(c);
    if (v.date)
        return v;
    bool const plain = c.datatype.empty() || is_xsd(c.datatype, "string");
    if (numeric_datatype(c.datatype) || (plain && c.lang.empty()))
        v.number = parse_number(c.lexical);
    return v;
}

bool equivalent(const Value& a, const Value& b)
{
    if (a.kind != b.kind)
        return false;
    if (a.date && b.date)
    {
        auto const p = std::min(a.date->precision, b.date->precision);
        if (a.date->year != b.date->year)
            return false;
        if (p >= 2 && a.date->month != b.date->month)
            return false;
        return p < 3 || a.date->day == b.date->day;
    }
    if (a.number && b.number)
        return *a.number == *b.number;
    return a.text == b.text;
}

std::string key_of(const Value& v)
{
    switch (v.kind)
    {
        case CellKind::Iri: return "I:" + v.text;
        case CellKind::Blank: return "B:" + v.text;
        case CellKind::Unbound: return "U";
        case CellKind::Literal:
            if (v.date)
                return "D:" + date_key(*v.date);
            if (v.number)
                return "N:" + number_key(*v.number);
            return "L:" + v.text;
    }
    return {};
}

using Row = std::vector<Value>;

std::vector<Row> prepare_rows(const ResultTable& t)
{
    std::vector<Row> rows;
    rows.reserve(t.rows.size());
    for (const auto& r: t.rows)
    {
        Row row;
        row.reserve(r.size());
        for (const auto& c: r)
            row.push_back(prepare(c));
        rows.push_back(std::move(row));
    }
    return rows;
}

// Kuhn's algorithm on a tiny graph: every gt cell needs its own pred cell.
bool augment_cell(std::size_t g, const Row& gt, const Row& pred, std::vector<int>& owner, std::vector<char>& visited)
{
    for (std::size_t p = 0; p < pred.size(); ++p)
    {
        if (visited[p] || !equivalent(gt[g], pred[p]))
            continue;
        visited[p] = 1;
        if (owner[p] < 0 || augment_cell(static_cast<std::size_t>(owner[p]), gt, pred, owner, visited))
        {
            owner[p] = static_cast<int>(g);
            return true;
        }
    }
    return false;
}

bool rows_match(const Row& gt, const Row& pred)
{
    if (gt.size() > pred.size())
        return false;
    std::vector<int> owner(pred.size(), -1);
    std::vector<char> visited(pred.size());
    for (std::size_t g = 0; g < gt.size(); ++g)
    {
        std::ranges::fill(visited, 0);
        if (!augment_cell(g, gt, pred, owner, visited))
            return false;
    }
    return true;
}

// Hopcroft-Karp over an adjacency list from left (pred) to right (gt).
std::size_t maximum_matching(const std::vector<std::vector<std::size_t>>& adj, std::size_t right_size)
{
    constexpr std::size_t none = static_cast<std::size_t>(-1);
    std::size_t const left_size = adj.size();
    std::vector<std::size_t> match_left(left_size, none);
    std::vector<std::size_t> match_right(right_size, none);
    std::vector<std::size_t> dist(left_size);
    std::size_t matched = 0;

    auto const bfs = [&] {
        std::vector<std::size_t> queue;
        bool found = false;
        for (std::size_t u = 0; u < left_size; ++u)
        {
            if (match_left[u] == none)
            {
                dist[u] = 0;
                queue.push_back(u);
            }
            else
                dist[u] = none;
        }
        for (std::size_t head = 0; head < queue.size(); ++head)
        {
            auto const u = queue[head];
            for (auto v: adj[u])
            {
                auto const w = match_right[v];
                if (w == none)
                    found = true;
                else if (dist[w] == none)
                {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        return found;
    };

    std::vector<std::size_t> next(left_size);
    auto const dfs = [&](auto&& self, std::size_t u) -> bool {
        for (; next[u] < adj[u].size(); ++next[u])
        {
            auto const v = adj[u][next[u]];
            auto const w = match_right[v];
            if (w == none || (dist[w] == dist[u] + 1 && self(self, w)))
            {
                match_left[u] = v;
                match_right[v] = u;
                return true;
            }
        }
        dist[u] = none;
        return false;
    };

    while (bfs())
    {
        std::ranges::fill(next, 0);
        for (std::size_t u = 0; u < left_size; ++u)
            if (match_left[u] == none && dfs(dfs, u))
                ++matched;
    }
    return matched;
}

EvalScore from_counts(std::size_t matches, std::size_t gt_rows, std::size_t pred_rows, ScorePath path)
{
    EvalScore s;
    s.path = path;
    if (gt_rows == 0 && pred_rows == 0)
    {
        s.precision = s.recall = s.f1 = 1.0;
        return s;
    }
    if (gt_rows == 0 || pred_rows == 0)
        return s;
    s.precision = static_cast<double>(matches) / static_cast<double>(pred_rows);
    s.recall = static_cast<double>(matches) / static_cast<double>(gt_rows);
    if (s.precision + s.recall > 0)
        s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

} // namespace

std::string_view to_string(ScorePath path)
{
    switch (path)
    {
        case ScorePath::Matched: return "matched";
        case ScorePath::ExactFallback: return "exact_fallback";
        case ScorePath::AskEquivalence: return "ask_equivalence";
        case ScorePath::Excluded: return "excluded";
        case ScorePath::Error: return "error";
        case ScorePath::Invalid: return "invalid";
    }
    return "?";
}

std::optional<ScorePath> parse_score_path(std::string_view text)
{
    for (auto p: { ScorePath::Matched, ScorePath::ExactFallback, ScorePath::AskEquivalence, ScorePath::Excluded, ScorePath::Error, ScorePath::Invalid })
        if (to_string(p) == text)
            return p;
    return std::nullopt;
}

bool cells_equivalent(const Cell& a, const Cell& b)
{
    return equivalent(prepare(a), prepare(b));
}

std::string canonical_cell(const Cell& cell)
{
    return key_of(prepare(cell));
}

bool row_match(const std::vector<Cell>& gt_row, const std::vector<Cell>& pred_row)
{
    Row gt;
    Row pred;
    for (const auto& c: gt_row)
        gt.push_back(prepare(c));
    for (const auto& c: pred_row)
        pred.push_back(prepare(c));
    return rows_match(gt, pred);
}

EvalScore assignment_f1(const ResultTable& gt, const ResultTable& pred)
{
    auto const gt_rows = prepare_rows(gt);
    auto const pred_rows = prepare_rows(pred);
    std::vector<std::vector<std::size_t>> adj(pred_rows.size());
    for (std::size_t p = 0; p < pred_rows.size(); ++p)
        for (std::size_t g = 0; g < gt_rows.size(); ++g)
            if (rows_match(gt_rows[g], pred_rows[p]))
                adj[p].push_back(g);
    auto const matches = maximum_matching(adj, gt_rows.size());
    return from_counts(matches, gt_rows.size(), pred_rows.size(), ScorePath::Matched);
}

EvalScore exact_f1(const ResultTable& gt, const ResultTable& pred)
{
    auto const row_key = [](const std::vector<Cell>& row) {
        std::string key;
        for (const auto& c: row)
        {
            key += canonical_cell(c);
            key += '\x1f';
        }
        return key;
    };
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& r: gt.rows)
        ++counts[row_key(r)];
    std::size_t matches = 0;
    for (const auto& r: pred.rows)
    {
        auto it = counts.find(row_key(r));
        if (it != counts.end() && it->second > 0)
        {
            --it->second;
            ++matches;
        }
    }
    return from_counts(matches, gt.rows.size(), pred.rows.size(), ScorePath::ExactFallback);
}

EvalScore score_results(const QueryOutcome& gt, const std::optional<QueryOutcome>& pred)
{
    EvalScore s;
    if (const auto* err = std::get_if<QueryError>(&gt))
    {
        s.path = ScorePath::Invalid;
        s.notes = "ground truth failed (" + std::string(to_string(err->kind)) + "): " + err->message;
        return s;
    }
    const auto& gt_table = std::get<ResultTable>(gt);
    if (!gt_table.is_ask() && gt_table.rows.empty())
    {
        s.path = ScorePath::Excluded;
        s.notes = "empty ground truth";
        return s;
    }
    if (!pred)
    {
        s.path = ScorePath::Error;
        s.notes = "no predicted query";
        return s;
    }
    if (const auto* err = std::get_if<QueryError>(&*pred))
    {
        s.path = ScorePath::Error;
        s.notes = "prediction failed (" + std::string(to_string(err->kind)) + "): " + err->message;
        return s;
    }
    const auto& pred_table = std::get<ResultTable>(*pred);

    if (gt_table.is_ask() || pred_table.is_ask())
    {
        bool const gt_value = gt_table.is_ask() ? *gt_table.ask_result : !gt_table.rows.empty();
        bool const pred_value = pred_table.is_ask() ? *pred_table.ask_result : !pred_table.rows.empty();
        s.path = ScorePath::AskEquivalence;
        s.precision = s.recall = s.f1 = gt_value == pred_value ? 1.0 : 0.0;
        return s;
    }
    if (gt_table.rows.size() > assignment_row_limit || pred_table.rows.size() > assignment_row_limit)
        s = exact_f1(gt_table, pred_table);
    else
        s = assignment_f1(gt_table, pred_table);
    if (gt_table.truncated || pred_table.truncated)
        s.notes = "results truncated at " + std::to_string(evaluation_row_cap) + " rows";
    return s;
}

GroundTruthCache::GroundTruthCache(std::filesystem::path dir): _dir(std::move(dir))
{
    std::error_code ec;
    std::filesystem::create_directories(_dir, ec);
    if (ec)
        fail(ErrorKind::Config, "cannot create ground-truth cache '" + _dir.string() + "': " + ec.message());
}

std::filesystem::path GroundTruthCache::entry_path(const std::string& endpoint, const std::string& sparql) const
{
    return _dir / (hex64(fnv1a64(endpoint + "\n" + sparql)) + ".json");
}

std::optional<ResultTable> GroundTruthCache::get(const std::string& endpoint, const std::string& sparql) const
{
    std::ifstream in(entry_path(endpoint, sparql), std::ios::binary);
    if (!in)
        return std::nullopt;
    auto doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || doc.value("endpoint", "") != endpoint || doc.value("query", "") != sparql || !doc.contains("result"))
        return std::nullopt;
    try
    {
        return parse_sparql_json(doc["result"].dump(), evaluation_row_cap);
    }
    catch (const QueryError&)
    {
        return std::nullopt;
    }
}

void GroundTruthCache::put(const std::string& endpoint, const std::string& sparql, const ResultTable& table) const
{
    if (table.truncated)
        return;
    static std::atomic<std::uint64_t> counter { 0 };
    auto const target = entry_path(endpoint, sparql);
    auto tmp = target;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id> {}(std::this_thread::get_id())) + "-" + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            return;
        out << json { { "endpoint", endpoint }, { "query", sparql }, { "result", json::parse(to_sparql_json(table)) } }.dump();
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec)
        std::filesystem::remove(tmp, ec);
}

EvalScore score_sample(const BenchmarkSample& sample,
                       const Outcome& predicted,
                       const Catalog& catalog,
                       const SparqlClient& client,
                       const GroundTruthCache* cache)
{
    auto const* gt_kg = catalog.find(sample.kg);
    if (gt_kg == nullptr)
    {
        EvalScore s;
        s.path = ScorePath::Invalid;
        s.notes = "unknown knowledge graph '" + sample.kg + "'";
        return s;
    }
    auto const eval_client = client.with_row_cap(evaluation_row_cap);
    bool const cacheable = cache != nullptr && !gt_kg->endpoint.starts_with("file:");

    QueryOutcome gt;
    if (auto hit = cacheable ? cache->get(gt_kg->endpoint, sample.sparql) : std::nullopt)
        gt = std::move(*hit);
    else
    {
        gt = eval_client.execute(*gt_kg, sample.sparql);
        if (cacheable)
            if (const auto* table = std::get_if<ResultTable>(&gt))
                cache->put(gt_kg->endpoint, sample.sparql, *table);
    }

    std::optional<QueryOutcome> pred;
    if (predicted.sparql && std::get_if<ResultTable>(&gt) != nullptr)
    {
        const auto* pred_kg = predicted.kg ? catalog.find(*predicted.kg) : nullptr;
        pred = eval_client.execute(pred_kg != nullptr ? *pred_kg : *gt_kg, *predicted.sparql);
    }
    auto score = score_results(gt, pred);
    if (score.counted() && predicted.kind != OutcomeKind::Answered)
    {
        auto const note = predicted.sparql ? std::string(to_string(predicted.kind)) + " with best attempt" : std::string(to_string(predicted.kind));
        score.notes = score.notes.empty() ? note : note + "; " + score.notes;
    }
    return score;
}

namespace
{

std::string id_string(const json& v)
{
    if (v.is_string())
        return v.get<std::string>();
    if (v.is_number_integer())
        return std::to_string(v.get<long long>());
    return {};
}

std::vector<BenchmarkSample> load_qald(const json& doc, const std::string& default_kg, const std::filesystem::path& path)
{
    std::vector<BenchmarkSample> out;
    for (const auto& q: doc["questions"])
    {
        BenchmarkSample s;
        s.id = q.contains("id") ? id_string(q["id"]) : std::string();
        if (q.contains("question") && q["question"].is_array())
        {
            for (const auto& entry: q["question"])
                if (entry.value("language", "") == "en")
                    s.question = entry.value("string", "");
            if (s.question.empty() && !q["question"].empty())
                s.question = q["question"][0].value("string", "");
        }
        if (q.contains("query") && q["query"].is_object())
            s.sparql = q["query"].value("sparql", "");
        s.kg = default_kg;
        if (s.id.empty() || trim(s.question).empty())
            fail(ErrorKind::Input, path.string() + ": question without id or text");
        if (trim(s.sparql).empty())
        {
            spdlog::warn("{}: question {} has no SPARQL query, skipped", path.string(), s.id);
            continue;
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

std::vector<BenchmarkSample> load_dataset(const std::filesystem::path& path, const std::string& default_kg)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorKind::Input, "cannot read dataset '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto const content = buffer.str();

    std::vector<BenchmarkSample> samples;
    auto const first = content.find_first_not_of(" \t\r\n");
    bool done = false;
    if (first != std::string::npos && content[first] == '{')
    {
        auto doc = json::parse(content, nullptr, false);
        if (!doc.is_discarded() && doc.is_object() && doc.contains("questions") && doc["questions"].is_array())
        {
            samples = load_qald(doc, default_kg, path);
            done = true;
        }
    }
    if (!done)
    {
        std::istringstream lines(content);
        std::string line;
        std::size_t number = 0;
        while (std::getline(lines, line))
        {
            ++number;
            if (trim(line).empty())
                continue;
            auto const where = path.string() + ": line " + std::to_string(number) + ": ";
            auto rec = json::parse(line, nullptr, false);
            if (rec.is_discarded() || !rec.is_object())
                fail(ErrorKind::Input, where + "not a JSON object");
            BenchmarkSample s;
            s.id = rec.contains("id") ? id_string(rec["id"]) : std::string();
            s.question = rec.value("question", "");
            s.sparql = rec.value("sparql", "");
            s.kg = rec.value("kg", default_kg);
            s.split = rec.value("split", "");
            if (s.id.empty())
                fail(ErrorKind::Input, where + "missing id");
            if (trim(s.question).empty())
                fail(ErrorKind::Input, where + "missing question");
            if (trim(s.sparql).empty())
                fail(ErrorKind::Input, where + "missing sparql");
            samples.push_back(std::move(s));
        }
    }
    std::set<std::string> ids;
    for (const auto& s: samples)
    {
        if (s.kg.empty())
            fail(ErrorKind::Input, path.string() + ": sample '" + s.id + "' has no knowledge graph");
        if (!ids.insert(s.id).second)
            fail(ErrorKind::Input, path.string() + ": duplicate sample id '" + s.id + "'");
    }
    return samples;
}

std::vector<std::size_t> sample_indices(std::size_t size, std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    auto picked = draw_without_replacement(size, std::min(n, size), rng);
    std::ranges::sort(picked);
    return picked;
}

json sample_result_json(const SampleResult& r)
{
    json rec { { "id", r.sample.id },
               { "kg", r.sample.kg },
               { "question", r.sample.question },
               { "gt_sparql", r.sample.sparql },
               { "outcome", to_string(r.outcome.kind) } };
    if (!r.sample.split.empty())
        rec["split"] = r.sample.split;
    if (r.outcome.kg)
        rec["pred_kg"] = *r.outcome.kg;
    if (r.outcome.sparql)
        rec["sparql"] = *r.outcome.sparql;
    if (!r.outcome.answer.empty())
        rec["answer"] = r.outcome.answer;
    if (!r.outcome.explanation.empty())
        rec["explanation"] = r.outcome.explanation;
    rec["precision"] = r.score.precision;
    rec["recall"] = r.score.recall;
    rec["f1"] = r.score.f1;
    rec["path"] = to_string(r.score.path);
    rec["notes"] = r.score.notes;
    rec["turns"] = r.turns;
    rec["function_calls"] = r.function_calls;
    rec["feedback_loops"] = r.feedback_loops;
    rec["call_counts"] = r.call_counts;
    rec["trace"] = r.trace_file;
    return rec;
}

SampleResult sample_result_from_json(const json& rec)
{
    SampleResult r;
    r.sample.id = rec.at("id").get<std::string>();
    r.sample.kg = rec.value("kg", "");
    r.sample.question = rec.value("question", "");
    r.sample.sparql = rec.value("gt_sparql", "");
    r.sample.split = rec.value("split", "");
    auto const outcome = rec.at("outcome").get<std::string>();
    bool known = false;
    for (auto k: { OutcomeKind::Answered, OutcomeKind::Cancelled, OutcomeKind::Exhausted, OutcomeKind::Aborted })
        if (to_string(k) == outcome)
        {
            r.outcome.kind = k;
            known = true;
        }
    if (!known)
        fail(ErrorKind::Input, "unknown outcome '" + outcome + "'");
    if (rec.contains("pred_kg"))
        r.outcome.kg = rec["pred_kg"].get<std::string>();
    if (rec.contains("sparql"))
        r.outcome.sparql = rec["sparql"].get<std::string>();
    r.outcome.answer = rec.value("answer", "");
    r.outcome.explanation = rec.value("explanation", "");
    r.score.precision = rec.at("precision").get<double>();
    r.score.recall = rec.at("recall").get<double>();
    r.score.f1 = rec.at("f1").get<double>();
    auto path = parse_score_path(rec.at("path").get<std::string>());
    if (!path)
        fail(ErrorKind::Input, "unknown score path '" + rec["path"].get<std::string>() + "'");
    r.score.path = *path;
    r.score.notes = rec.value("notes", "");
    r.turns = rec.value("turns", std::size_t { 0 });
    r.function_calls = rec.value("function_calls", std::size_t { 0 });
    r.feedback_loops = rec.value("feedback_loops", std::size_t { 0 });
    if (rec.contains("call_counts"))
        r.call_counts = rec["call_counts"].get<std::map<std::string, std::size_t>>();
    r.trace_file = rec.value("trace", "");
    return r;
}

BenchmarkSummary summarize(const std::string& benchmark, std::vector<SampleResult> results)
{
    std::ranges::sort(results, {}, [](const SampleResult& r) { return r.sample.id; });
    BenchmarkSummary s;
    s.benchmark = benchmark;
    s.samples = results.size();
    double f1_sum = 0;
    double turns = 0;
    double calls = 0;
    for (const auto& r: results)
    {
        ++s.outcomes[std::string(to_string(r.outcome.kind))];
        ++s.paths[std::string(to_string(r.score.path))];
        if (r.score.counted())
        {
            ++s.evaluated;
            f1_sum += r.score.f1;
            if (r.outcome.kind != OutcomeKind::Answered && r.outcome.sparql)
                ++s.best_attempts_scored;
        }
        for (const auto& [name, count]: r.call_counts)
            s.calls[name] += count;
        turns += static_cast<double>(r.turns);
        calls += static_cast<double>(r.function_calls);
    }
    if (s.evaluated > 0)
        s.mean_f1 = f1_sum / static_cast<double>(s.evaluated);
    if (s.samples > 0)
    {
        s.mean_turns = turns / static_cast<double>(s.samples);
        s.mean_function_calls = calls / static_cast<double>(s.samples);
    }
    return s;
}

json summary_json(const BenchmarkSummary& s)
{
    return json { { "benchmark", s.benchmark },
                  { "samples", s.samples },
                  { "evaluated", s.evaluated },
                  { "mean_f1", s.mean_f1 },
                  { "outcomes", s.outcomes },
                  { "paths", s.paths },
                  { "best_attempts_scored", s.best_attempts_scored },
                  { "calls", s.calls },
                  { "mean_turns", s.mean_turns },
                  { "mean_function_calls", s.mean_function_calls } };
}

namespace
{

std::string trace_file_name(const std::string& id)
{
    std::string name;
    for (char c: id)
        name += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
    if (name != id || name.empty() || name.front() == '.')
        name += "-" + hex64(fnv1a64(id)).substr(0, 8);
    return "traces/" + name + ".jsonl";
}

void write_file(const std::filesystem::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorKind::Input, "cannot write '" + path.string() + "'");
    out << content;
}

} // namespace

BenchmarkSummary run_benchmark(const std::filesystem::path& dataset, const BenchmarkConfig& config, const Toolbox& toolbox, ChatModel& model)
{
    config.session.validate();
    if (config.parallelism < 1)
        fail(ErrorKind::InvalidArgument, "parallelism must be at least 1");
    if (config.out.empty())
        fail(ErrorKind::InvalidArgument, "an output directory is required");
    const auto& catalog = toolbox.catalog();
    auto const default_kg = config.kg.value_or(catalog.empty() ? std::string() : catalog.graphs().front().name);
    auto const samples = load_dataset(dataset, default_kg);

    std::set<std::string> graphs;
    for (const auto& s: samples)
    {
        if (catalog.find(s.kg) == nullptr)
            fail(ErrorKind::Input, "sample '" + s.id + "' refers to unknown knowledge graph '" + s.kg + "'");
        graphs.insert(s.kg);
    }
    for (const auto& g: graphs)
        if (!toolbox.client().transport().reachable(catalog.at(g)))
            fail(ErrorKind::Transport, "endpoint of '" + g + "' is unreachable: " + catalog.at(g).endpoint);

    auto const picked = sample_indices(samples.size(), config.n, config.seed);
    std::optional<GroundTruthCache> cache;
    if (config.gt_cache)
        cache.emplace(*config.gt_cache);

    std::filesystem::create_directories(config.out / "traces");
    auto const benchmark = dataset.stem().string();
    json ids = json::array();
    for (auto i: picked)
        ids.push_back(samples[i].id);
    json run { { "layout_version", output_layout_version },
               { "benchmark", benchmark },
               { "dataset", std::filesystem::absolute(dataset).string() },
               { "n", config.n },
               { "seed", config.seed },
               { "parallelism", config.parallelism },
               { "function_set", to_string(config.session.function_set) },
               { "few_shot", to_string(config.session.few_shot) },
               { "shots", config.session.shots },
               { "feedback", config.session.feedback },
               { "strict_iri_guard", config.session.strict_iri_guard },
               { "max_llm_turns", config.session.max_llm_turns },
               { "model", model.id() },
               { "sample_ids", ids } };
    write_file(config.out / "run.json", run.dump(2) + "\n");

    auto const started = std::chrono::steady_clock::now();
    std::vector<SampleResult> results(picked.size());
    std::atomic<std::size_t> next { 0 };
    std::mutex error_mutex;
    std::exception_ptr first_error;
    std::atomic<bool> stop { false };

    auto const worker = [&] {
        while (!stop)
        {
            auto const slot = next++;
            if (slot >= picked.size())
                return;
            try
            {
                const auto& sample = samples[picked[slot]];
                auto session = config.session;
                session.seed = config.seed ^ fnv1a64(sample.id);
                session.kg = sample.kg;
                auto trace = run_session(sample.question, session, toolbox, model, sample.id);
                SampleResult r;
                r.sample = sample;
                r.outcome = trace.outcome;
                r.turns = trace.turns;
                r.function_calls = trace.function_calls;
                r.feedback_loops = trace.feedback_loops;
                r.call_counts = trace.call_counts;
                r.trace_file = trace_file_name(sample.id);
                write_trace(trace, config.out / r.trace_file);
                r.score = score_sample(sample, trace.outcome, catalog, toolbox.client(), cache ? &*cache : nullptr);
                spdlog::info("{}: {} f1={:.3f} ({})", sample.id, to_string(r.outcome.kind), r.score.f1, to_string(r.score.path));
                results[slot] = std::move(r);
            }
            catch (...)
            {
                std::lock_guard lock(error_mutex);
                if (!first_error)
                    first_error = std::current_exception();
                stop = true;
            }
        }
    };
    std::vector<std::thread> threads;
    auto const workers = std::min(config.parallelism, std::max<std::size_t>(picked.size(), 1));
    for (std::size_t i = 0; i < workers; ++i)
        threads.emplace_back(worker);
    for (auto& t: threads)
        t.join();
    if (first_error)
        std::rethrow_exception(first_error);
    auto const runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    std::ranges::sort(results, {}, [](const SampleResult& r) { return r.sample.id; });
    std::string scores;
    for (const auto& r: results)
        scores += sample_result_json(r).dump() + "\n";
    write_file(config.out / "scores.jsonl", scores);

    auto summary = summarize(benchmark, results);
    auto report = summary_json(summary);
    report["layout_version"] = output_layout_version;
    report["runtime_seconds"] = runtime;
    write_file(config.out / "report.json", report.dump(2) + "\n");
    write_file(config.out / "report.txt", format_report({ summary }));
    return summary;
}

std::vector<BenchmarkSummary> load_run_summaries(const std::filesystem::path& dir)
{
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
        fail(ErrorKind::Input, "cannot read directory '" + dir.string() + "'");
    std::vector<std::filesystem::path> runs;
    if (std::filesystem::exists(dir / "scores.jsonl"))
        runs.push_back(dir);
    else
    {
        for (const auto& entry: std::filesystem::directory_iterator(dir))
            if (entry.is_directory() && std::filesystem::exists(entry.path() / "scores.jsonl"))
                runs.push_back(entry.path());
        std::ranges::sort(runs);
    }
    if (runs.empty())
        fail(ErrorKind::Input, "no traces found");

    std::vector<BenchmarkSummary> out;
    for (const auto& run: runs)
    {
        auto name = run.filename().string();
        if (std::ifstream meta(run / "run.json"); meta)
        {
            auto doc = json::parse(meta, nullptr, false);
            if (doc.is_discarded() || !doc.is_object())
                fail(ErrorKind::Input, (run / "run.json").string() + ": malformed");
            if (doc.value("layout_version", 0) > output_layout_version)
                fail(ErrorKind::Input, (run / "run.json").string() + ": unsupported layout version");
            name = doc.value("benchmark", name);
        }
        std::ifstream in(run / "scores.jsonl");
        if (!in)
            fail(ErrorKind::Input, "cannot read '" + (run / "scores.jsonl").string() + "'");
        std::vector<SampleResult> results;
        std::string line;
        std::size_t number = 0;
        while (std::getline(in, line))
        {
            ++number;
            if (trim(line).empty())
                continue;
            try
            {
                results.push_back(sample_result_from_json(json::parse(line)));
            }
            catch (const json::exception& e)
            {
                fail(ErrorKind::Input, (run / "scores.jsonl").string() + ":" + std::to_string(number) + ": " + e.what());
            }
            catch (const Error& e)
            {
                fail(ErrorKind::Input, (run / "scores.jsonl").string() + ":" + std::to_string(number) + ": " + e.what());
            }
        }
        out.push_back(summarize(name, std::move(results)));
    }
    return out;
}

namespace
{

std::string format_columns(const std::vector<std::vector<std::string>>& rows)
{
    std::vector<std::size_t> widths;
    for (const auto& r: rows)
    {
        widths.resize(std::max(widths.size(), r.size()));
        for (std::size_t i = 0; i < r.size(); ++i)
            widths[i] = std::max(widths[i], r[i].size());
    }
    std::string out;
    for (const auto& r: rows)
    {
        std::string line;
        for (std::size_t i = 0; i < r.size(); ++i)
        {
            if (i > 0)
                line += "  ";
            auto const pad = std::string(widths[i] - r[i].size(), ' ');
            line += i == 0 ? r[i] + pad : pad + r[i];
        }
        while (!line.empty() && line.back() == ' ')
            line.pop_back();
        out += line + "\n";
    }
    return out;
}

std::string fixed3(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string count_of(const std::map<std::string, std::size_t>& m, const std::string& key)
{
    auto it = m.find(key);
    return std::to_string(it == m.end() ? 0 : it->second);
}

} // namespace

std::string format_report(const std::vector<BenchmarkSummary>& runs, const std::optional<std::vector<BenchmarkSummary>>& compare)
{
    std::vector<std::vector<std::string>> main { { "benchmark", "samples", "evaluated", "mean F1", "answered", "cancelled", "exhausted", "aborted", "errors", "excluded", "invalid", "best attempts" } };
    for (const auto& s: runs)
        main.push_back({ s.benchmark,
                         std::to_string(s.samples),
                         std::to_string(s.evaluated),
                         fixed3(s.mean_f1),
                         count_of(s.outcomes, "answered"),
                         count_of(s.outcomes, "cancelled"),
                         count_of(s.outcomes, "exhausted"),
                         count_of(s.outcomes, "aborted"),
                         count_of(s.paths, "error"),
                         count_of(s.paths, "excluded"),
                         count_of(s.paths, "invalid"),
                         std::to_string(s.best_attempts_scored) });
    std::string out = format_columns(main);

    std::vector<std::string> used;
    for (const auto& spec: function_specs())
        if (std::ranges::any_of(runs, [&](const BenchmarkSummary& s) { return s.calls.contains(spec.mnemonic); }))
            used.push_back(spec.mnemonic);
    out += "\nFunction calls:\n";
    std::vector<std::vector<std::string>> hist { { "benchmark" } };
    hist[0].insert(hist[0].end(), used.begin(), used.end());
    hist[0].push_back("turns/sample");
    for (const auto& s: runs)
    {
        std::vector<std::string> row { s.benchmark };
        for (const auto& m: used)
            row.push_back(count_of(s.calls, m));
        row.push_back(fixed3(s.mean_turns));
        hist.push_back(std::move(row));
    }
    out += format_columns(hist);

    if (compare)
    {
        out += "\nComparison (mean F1):\n";
        std::vector<std::vector<std::string>> delta { { "benchmark", "A", "B", "delta" } };
        std::set<std::string> names;
        for (const auto& s: runs)
            names.insert(s.benchmark);
        for (const auto& s: *compare)
            names.insert(s.benchmark);
        auto const find = [](const std::vector<BenchmarkSummary>& list, const std::string& name) -> const BenchmarkSummary* {
            for (const auto& s: list)
                if (s.benchmark == name)
                    return &s;
            return nullptr;
        };
        for (const auto& name: names)
        {
            const auto* a = find(runs, name);
            const auto* b = find(*compare, name);
            std::string d = "-";
            if (a && b)
            {
                auto const diff = b->mean_f1 - a->mean_f1;
                d = (diff >= 0 ? "+" : "") + fixed3(diff);
            }
            delta.push_back({ name, a ? fixed3(a->mean_f1) : "-", b ? fixed3(b->mean_f1) : "-", d });
        }
        out += format_columns(delta);
    }
    return out;
}

} // namespace kgq
