// SPDX-License-Identifier: Apache-2.0
#include <kgq/error.hpp>
#include <kgq/text.hpp>
#include <kgq/vector_index.hpp>

#include <kgq/http.hpp>
#include <nlohmann/json.hpp>

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>

namespace kgq
{

using json = nlohmann::json;

void normalize(Vector& v)
{
    double sum = 0.0;
    for (float x: v)
        sum += static_cast<double>(x) * x;
    if (sum <= 0.0)
        return;
    auto const inv = 1.0 / std::sqrt(sum);
    for (float& x: v)
        x = static_cast<float>(x * inv);
}

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dimension): _dimension(dimension)
{
    if (dimension == 0)
        fail(ErrorKind::InvalidArgument, "embedding dimension must be positive");
}

std::string HashEmbeddingProvider::id() const
{
    return "hash-" + std::to_string(_dimension);
}

std::vector<Vector> HashEmbeddingProvider::embed(std::span<const std::string> texts)
{
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& text: texts)
    {
        Vector v(_dimension, 0.0f);
        auto tokens = tokenize(text);
        if (tokens.empty())
            tokens.emplace_back();
        for (const auto& t: tokens)
            v[fnv1a64(t) % _dimension] += 1.0f;
        out.push_back(std::move(v));
    }
    return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string url, std::string model, std::string api_key, std::size_t dimension, int max_attempts):
    _url(std::move(url)), _model(std::move(model)), _api_key(std::move(api_key)), _dimension(dimension), _max_attempts(std::max(1, max_attempts))
{
}

std::vector<Vector> HttpEmbeddingProvider::embed(std::span<const std::string> texts)
{
    json body { { "model", _model }, { "input", std::vector<std::string>(texts.begin(), texts.end()) } };
    HttpRequest request;
    request.url = _url;
    if (!_api_key.empty())
        request.headers.emplace_back("Authorization", "Bearer " + _api_key);
    request.body = body.dump();
    request.content_type = "application/json";

    std::string last_error;
    for (int attempt = 0; attempt < _max_attempts; ++attempt)
    {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(200) * (1 << (attempt - 1)));
        HttpResponse res;
        try
        {
            res = http_post(request);
        }
        catch (const TimeoutError& e)
        {
            last_error = e.message;
            continue;
        }
        catch (const Error& e)
        {
            last_error = e.what();
            continue;
        }
        if (res.status >= 500 || res.status == 429)
        {
            last_error = "HTTP " + std::to_string(res.status);
            continue;
        }
        if (res.status >= 400)
            fail(ErrorKind::Transport, "embedding endpoint returned HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 500));
        try
        {
            auto doc = json::parse(res.body);
            std::vector<Vector> out(texts.size());
            for (const auto& entry: doc.at("data"))
            {
                auto const index = entry.value("index", std::size_t { 0 });
                if (index >= out.size())
                    fail(ErrorKind::Transport, "embedding response index out of range");
                out[index] = entry.at("embedding").get<Vector>();
            }
            return out;
        }
        catch (const json::exception& e)
        {
            fail(ErrorKind::Transport, std::string("malformed embedding response: ") + e.what());
        }
    }
    fail(ErrorKind::Transport, "embedding endpoint failed after " + std::to_string(_max_attempts) + " attempts: " + last_error);
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const std::optional<EmbeddingConfig>& config)
{
    if (!config)
        return nullptr;
    if (config->provider == "hash")
        return std::make_unique<HashEmbeddingProvider>(config->dimension);
    std::string key;
    if (!config->api_key_env.empty())
        if (const char* v = std::getenv(config->api_key_env.c_str()))
            key = v;
    auto url = config->url;
    if (const char* v = std::getenv("KGQ_EMBEDDING_URL"); v != nullptr && *v != '\0')
        url = v;
    return std::make_unique<HttpEmbeddingProvider>(url, config->model, key, config->dimension);
}

std::string embed_item_text(const ItemRecord& item)
{
    if (item.infos.empty())
        return item.label;
    std::string out = item.label + " (";
    auto const n = std::min(item.infos.size(), max_embedded_infos);
    for (std::size_t i = 0; i < n; ++i)
    {
        if (i > 0)
            out += "; ";
        out += item.infos[i];
    }
    out += ")";
    return out;
}

SimilarityMatrix::SimilarityMatrix(std::string provider_id, std::size_t dimension, std::vector<float> data):
    _provider_id(std::move(provider_id)), _dimension(dimension), _data(std::move(data))
{
    if (_dimension == 0 || _data.size() % _dimension != 0)
        fail(ErrorKind::Input, "similarity matrix size is not a multiple of its dimension");
}

SimilarityMatrix SimilarityMatrix::build(std::span<const std::string> texts, EmbeddingProvider& provider, std::size_t batch)
{
    if (texts.empty())
        fail(ErrorKind::InvalidArgument, "cannot build a vector index from zero items");
    batch = std::max<std::size_t>(batch, 1);
    auto const d = provider.dimension();
    std::vector<float> data;
    data.reserve(texts.size() * d);
    for (std::size_t start = 0; start < texts.size(); start += batch)
    {
        auto const count = std::min(batch, texts.size() - start);
        std::vector<Vector> vectors;
        try
        {
            vectors = provider.embed(texts.subspan(start, count));
        }
        catch (const Error& e)
        {
            fail(e.kind(), "embedding batch " + std::to_string(start / batch) + " (items " + std::to_string(start) + "-"
                               + std::to_string(start + count - 1) + ") failed: " + e.what());
        }
        if (vectors.size() != count)
            fail(ErrorKind::Transport, "embedding batch " + std::to_string(start / batch) + " returned " + std::to_string(vectors.size())
                                           + " vectors for " + std::to_string(count) + " texts");
        for (auto& v: vectors)
        {
            if (v.size() != d)
                fail(ErrorKind::Transport, "embedding provider returned dimension " + std::to_string(v.size()) + ", expected "
                                               + std::to_string(d));
            normalize(v);
            data.insert(data.end(), v.begin(), v.end());
        }
    }
    return SimilarityMatrix(provider.id(), d, std::move(data));
}

Vector SimilarityMatrix::embed_query(std::string_view text, EmbeddingProvider& provider) const
{
    if (provider.id() != _provider_id)
        fail(ErrorKind::Config, "index was built with embedding provider '" + _provider_id + "' but queried with '" + provider.id() + "'");
    std::string const owned(text);
    auto vectors = provider.embed(std::span<const std::string>(&owned, 1));
    if (vectors.size() != 1 || vectors.front().size() != _dimension)
        fail(ErrorKind::Transport, "embedding provider returned an unexpected shape for the query");
    normalize(vectors.front());
    return std::move(vectors.front());
}

std::vector<double> SimilarityMatrix::similarities(std::span<const float> query) const
{
    std::vector<double> out(rows());
    for (std::size_t r = 0; r < out.size(); ++r)
    {
        auto const row = this->row(r);
        double sum = 0.0;
        for (std::size_t i = 0; i < _dimension; ++i)
            sum += static_cast<double>(row[i]) * query[i];
        out[r] = sum;
    }
    return out;
}

VectorIndex::VectorIndex(SimilarityMatrix matrix, std::vector<ItemRecord> items): _matrix(std::move(matrix)), _items(std::move(items))
{
    if (_matrix.rows() != _items.size())
        fail(ErrorKind::Input, "vector index has " + std::to_string(_matrix.rows()) + " vectors for " + std::to_string(_items.size()) + " items");
    for (std::size_t i = 0; i < _items.size(); ++i)
        _by_iri.emplace(_items[i].iri, i);
}

const ItemRecord* VectorIndex::find(std::string_view iri) const
{
    auto it = _by_iri.find(std::string(iri));
    return it == _by_iri.end() ? nullptr : &_items[it->second];
}

std::vector<SimilarityHit> VectorIndex::search(std::string_view query,
                                               EmbeddingProvider& provider,
                                               std::size_t k,
                                               const std::unordered_set<std::string>* restrict_to) const
{
    if (k == 0)
        fail(ErrorKind::InvalidArgument, "k must be at least 1");
    auto const q = _matrix.embed_query(query, provider);
    auto const sims = _matrix.similarities(q);

    std::vector<std::size_t> candidates;
    candidates.reserve(_items.size());
    for (std::size_t i = 0; i < _items.size(); ++i)
        if (restrict_to == nullptr || restrict_to->contains(_items[i].iri))
            candidates.push_back(i);

    auto const better = [&](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b])
            return sims[a] > sims[b];
        if (_items[a].score != _items[b].score)
            return _items[a].score > _items[b].score;
        return _items[a].iri < _items[b].iri;
    };
    auto const keep = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(), better);

    std::vector<SimilarityHit> hits;
    hits.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i)
        hits.push_back(SimilarityHit { _items[candidates[i]], sims[candidates[i]], i + 1 });
    return hits;
}

VectorIndex build_vector_index(const std::vector<ItemRecord>& items, EmbeddingProvider& provider, std::size_t batch)
{
    std::vector<std::string> texts;
    texts.reserve(items.size());
    for (const auto& item: items)
        texts.push_back(embed_item_text(item));
    return VectorIndex(SimilarityMatrix::build(texts, provider, batch), items);
}

namespace
{

constexpr char vector_magic[8] = { 'K', 'G', 'Q', 'V', 'E', 'C', 'I', 'X' };

template <class T>
void write_pod(std::ostream& out, const T& v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_str(std::ostream& out, std::string_view s)
{
    write_pod(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T read_pod(std::istream& in)
{
    T v {};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in)
        fail(ErrorKind::Input, "vector index file is truncated");
    return v;
}

std::string read_str(std::istream& in)
{
    auto const n = read_pod<std::uint32_t>(in);
    if (n > (1u << 28))
        fail(ErrorKind::Input, "vector index file is corrupt");
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in)
        fail(ErrorKind::Input, "vector index file is truncated");
    return s;
}

} // namespace

void VectorIndex::save(const std::filesystem::path& path) const
{
    auto const tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            fail(ErrorKind::Input, "cannot write index '" + path.string() + "'");
        out.write(vector_magic, sizeof vector_magic);
        write_pod(out, format_version);
        write_pod(out, std::uint64_t { _items.size() });
        write_pod(out, std::uint64_t { _matrix.dimension() });
        write_str(out, _matrix.provider_id());
        out.write(reinterpret_cast<const char*>(_matrix.data().data()), static_cast<std::streamsize>(_matrix.data().size() * sizeof(float)));
        for (const auto& item: _items)
        {
            write_pod(out, static_cast<std::uint8_t>(item.kind));
            write_str(out, item.iri);
            write_str(out, item.label);
            write_pod(out, item.score);
            write_pod(out, static_cast<std::uint32_t>(item.synonyms.size()));
            for (const auto& s: item.synonyms)
                write_str(out, s);
            write_pod(out, static_cast<std::uint32_t>(item.infos.size()));
            for (const auto& s: item.infos)
                write_str(out, s);
        }
        if (!out)
            fail(ErrorKind::Input, "failed writing index '" + path.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

VectorIndex VectorIndex::open(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorKind::Input, "cannot open index '" + path.string() + "'");
    char m[8];
    in.read(m, sizeof m);
    if (!in || std::memcmp(m, vector_magic, sizeof m) != 0)
        fail(ErrorKind::Input, "not a vector index (bad magic): " + path.string());
    auto const version = read_pod<std::uint32_t>(in);
    if (version != format_version)
        fail(ErrorKind::Input, "unsupported vector index version " + std::to_string(version));
    auto const n = read_pod<std::uint64_t>(in);
    auto const d = read_pod<std::uint64_t>(in);
    auto provider = read_str(in);
    if (d == 0 || n > (1ull << 32) || d > 65536)
        fail(ErrorKind::Input, "vector index header is corrupt");
    std::vector<float> data(n * d);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!in)
        fail(ErrorKind::Input, "vector index file is truncated");
    std::vector<ItemRecord> items;
    items.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i)
    {
        ItemRecord item;
        item.kind = static_cast<ItemKind>(read_pod<std::uint8_t>(in));
        item.iri = read_str(in);
        item.label = read_str(in);
        item.score = read_pod<std::uint64_t>(in);
        auto count = read_pod<std::uint32_t>(in);
        for (std::uint32_t j = 0; j < count; ++j)
            item.synonyms.push_back(read_str(in));
        count = read_pod<std::uint32_t>(in);
        for (std::uint32_t j = 0; j < count; ++j)
            item.infos.push_back(read_str(in));
        items.push_back(std::move(item));
    }
    return VectorIndex(SimilarityMatrix(std::move(provider), d, std::move(data)), std::move(items));
}

std::vector<ExamplePair> load_example_pairs(const std::filesystem::path& path, const std::string& default_kg)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorKind::Input, "cannot read example store '" + path.string() + "'");
    std::vector<ExamplePair> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (trim(line).empty())
            continue;
        try
        {
            auto doc = json::parse(line);
            ExamplePair p { doc.at("question").get<std::string>(), doc.at("sparql").get<std::string>(), doc.value("kg", default_kg) };
            if (trim(p.sparql).empty())
                fail(ErrorKind::Input, "empty sparql");
            pairs.push_back(std::move(p));
        }
        catch (const std::exception& e)
        {
            fail(ErrorKind::Input, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return pairs;
}

namespace
{

std::vector<std::string> questions_of(const std::vector<ExamplePair>& pairs)
{
    std::vector<std::string> out;
    out.reserve(pairs.size());
    for (const auto& p: pairs)
        out.push_back(p.question);
    return out;
}

} // namespace

ExampleStore::ExampleStore(std::vector<ExamplePair> pairs, EmbeddingProvider& provider):
    _pairs(std::move(pairs))
{
    if (!_pairs.empty())
        _matrix = SimilarityMatrix::build(questions_of(_pairs), provider);
}

std::vector<const ExamplePair*> ExampleStore::find_similar(std::string_view question, EmbeddingProvider& provider, std::size_t k) const
{
    if (_pairs.empty())
        return {};
    auto const sims = _matrix.similarities(_matrix.embed_query(question, provider));
    std::vector<std::size_t> order(_pairs.size());
    std::iota(order.begin(), order.end(), std::size_t { 0 });
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sims[a] > sims[b]; });
    std::vector<const ExamplePair*> out;
    for (std::size_t i = 0; i < std::min(k, order.size()); ++i)
        out.push_back(&_pairs[order[i]]);
    return out;
}

std::vector<const ExamplePair*> ExampleStore::draw_random(std::mt19937_64& rng, std::size_t k) const
{
    std::vector<const ExamplePair*> out;
    for (auto i: draw_without_replacement(_pairs.size(), k, rng))
        out.push_back(&_pairs[i]);
    return out;
}

std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t k, std::mt19937_64& rng)
{
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t { 0 });
    k = std::min(k, n);
    for (std::size_t i = 0; i < k; ++i)
    {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(k);
    return pool;
}

} // namespace kgq
