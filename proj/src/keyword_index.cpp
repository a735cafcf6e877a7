// SPDX-License-Identifier: Apache-2.0
#include <kgq/error.hpp>
#include <kgq/keyword_index.hpp>
#include <kgq/text.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

static_assert(std::endian::native == std::endian::little, "index images are little-endian");

namespace kgq
{

std::uint32_t score_alias(std::span<const std::string> query_tokens, std::span<const std::string> alias_tokens)
{
    std::uint32_t total = 0;
    for (const auto& q: query_tokens)
    {
        std::uint32_t best = 0;
        for (const auto& a: alias_tokens)
        {
            if (a == q)
            {
                best = 2;
                break;
            }
            if (a.size() > q.size() && a.starts_with(q))
                best = 1;
        }
        total += best;
    }
    return total;
}

namespace
{

constexpr char magic[8] = { 'K', 'G', 'Q', 'K', 'W', 'I', 'D', 'X' };

struct Header
{
    char magic[8];
    std::uint32_t version;
    std::uint32_t reserved;
    std::uint64_t n_tokens;
    std::uint64_t n_postings;
    std::uint64_t n_items;
    std::uint64_t off_token_offsets;
    std::uint64_t off_token_blob;
    std::uint64_t off_posting_offsets;
    std::uint64_t off_postings;
    std::uint64_t off_item_offsets;
    std::uint64_t off_item_blob;
    std::uint64_t off_scores;
    std::uint64_t off_iri_rank;
    std::uint64_t off_iri_order;
    std::uint64_t total_size;
};

struct Posting
{
    std::uint32_t item;
    std::uint32_t alias;
};

static_assert(sizeof(Posting) == 8);

std::size_t align8(std::size_t n)
{
    return (n + 7) & ~std::size_t { 7 };
}

class ImageWriter
{
  public:
    std::size_t append(const void* data, std::size_t size)
    {
        auto const at = align8(_bytes.size());
        _bytes.resize(at + size);
        if (size > 0)
            std::memcpy(_bytes.data() + at, data, size);
        return at;
    }

    template <class T>
    std::size_t append_vector(const std::vector<T>& v)
    {
        return append(v.data(), v.size() * sizeof(T));
    }

    std::vector<std::byte>& bytes() { return _bytes; }

  private:
    std::vector<std::byte> _bytes;
};

void put_u32(std::string& out, std::uint32_t v)
{
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::string& out, std::string_view s)
{
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

std::string encode_item(const ItemRecord& r)
{
    std::string out;
    out += static_cast<char>(r.kind);
    put_string(out, r.iri);
    put_string(out, r.label);
    out.append(reinterpret_cast<const char*>(&r.score), sizeof r.score);
    put_u32(out, static_cast<std::uint32_t>(r.synonyms.size()));
    for (const auto& s: r.synonyms)
        put_string(out, s);
    put_u32(out, static_cast<std::uint32_t>(r.infos.size()));
    for (const auto& s: r.infos)
        put_string(out, s);
    return out;
}

class Reader
{
  public:
    explicit Reader(std::string_view data): _data(data) {}

    std::uint32_t u32()
    {
        std::uint32_t v;
        need(sizeof v);
        std::memcpy(&v, _data.data() + _pos, sizeof v);
        _pos += sizeof v;
        return v;
    }
    std::uint64_t u64()
    {
        std::uint64_t v;
        need(sizeof v);
        std::memcpy(&v, _data.data() + _pos, sizeof v);
        _pos += sizeof v;
        return v;
    }
    std::uint8_t u8()
    {
        need(1);
        return static_cast<std::uint8_t>(_data[_pos++]);
    }
    std::string_view str()
    {
        auto const n = u32();
        need(n);
        auto s = _data.substr(_pos, n);
        _pos += n;
        return s;
    }

  private:
    void need(std::size_t n) const
    {
        if (_pos + n > _data.size())
            fail(ErrorKind::Input, "corrupt index item table");
    }
    std::string_view _data;
    std::size_t _pos = 0;
};

} // namespace

struct KeywordIndex::Image
{
    std::vector<std::byte> owned;
    void* mapped = nullptr;
    std::size_t mapped_size = 0;

    const std::byte* base = nullptr;
    const Header* header = nullptr;
    std::span<const std::uint64_t> token_offsets;
    const char* token_blob = nullptr;
    std::span<const std::uint64_t> posting_offsets;
    std::span<const Posting> postings;
    std::span<const std::uint64_t> item_offsets;
    const char* item_blob = nullptr;
    std::span<const std::uint64_t> scores;
    std::span<const std::uint32_t> iri_rank;
    std::span<const std::uint32_t> iri_order;

    Image() = default;
    Image(const Image&) = delete;
    Image& operator=(const Image&) = delete;
    ~Image()
    {
        if (mapped != nullptr)
            ::munmap(mapped, mapped_size);
    }

    void bind(const std::byte* data, std::size_t size)
    {
        if (size < sizeof(Header))
            fail(ErrorKind::Input, "keyword index image too small");
        base = data;
        header = reinterpret_cast<const Header*>(data);
        if (std::memcmp(header->magic, magic, sizeof magic) != 0)
            fail(ErrorKind::Input, "not a keyword index (bad magic)");
        if (header->version != format_version)
            fail(ErrorKind::Input,
                 "unsupported keyword index version " + std::to_string(header->version) + " (expected "
                     + std::to_string(format_version) + ")");
        if (header->total_size != size)
            fail(ErrorKind::Input, "keyword index image is truncated");
        auto const nt = header->n_tokens;
        auto const ni = header->n_items;
        auto const check = [&](std::uint64_t off, std::uint64_t bytes) {
            if (off % 8 != 0 || off + bytes > size)
                fail(ErrorKind::Input, "keyword index section out of bounds");
        };
        check(header->off_token_offsets, (nt + 1) * 8);
        check(header->off_posting_offsets, (nt + 1) * 8);
        check(header->off_postings, header->n_postings * sizeof(Posting));
        check(header->off_item_offsets, (ni + 1) * 8);
        check(header->off_scores, ni * 8);
        check(header->off_iri_rank, ni * 4);
        check(header->off_iri_order, ni * 4);
        token_offsets = { reinterpret_cast<const std::uint64_t*>(data + header->off_token_offsets), nt + 1 };
        token_blob = reinterpret_cast<const char*>(data + header->off_token_blob);
        posting_offsets = { reinterpret_cast<const std::uint64_t*>(data + header->off_posting_offsets), nt + 1 };
        postings = { reinterpret_cast<const Posting*>(data + header->off_postings), header->n_postings };
        item_offsets = { reinterpret_cast<const std::uint64_t*>(data + header->off_item_offsets), ni + 1 };
        item_blob = reinterpret_cast<const char*>(data + header->off_item_blob);
        scores = { reinterpret_cast<const std::uint64_t*>(data + header->off_scores), ni };
        iri_rank = { reinterpret_cast<const std::uint32_t*>(data + header->off_iri_rank), ni };
        iri_order = { reinterpret_cast<const std::uint32_t*>(data + header->off_iri_order), ni };
        if (header->off_token_blob + token_offsets.back() > size || header->off_item_blob + item_offsets.back() > size
            || posting_offsets.back() != header->n_postings)
            fail(ErrorKind::Input, "keyword index section out of bounds");
    }

    [[nodiscard]] std::string_view token(std::size_t i) const
    {
        return { token_blob + token_offsets[i], token_offsets[i + 1] - token_offsets[i] };
    }

    [[nodiscard]] std::string_view item_bytes(std::uint32_t id) const
    {
        return { item_blob + item_offsets[id], item_offsets[id + 1] - item_offsets[id] };
    }

    [[nodiscard]] std::string_view item_iri(std::uint32_t id) const
    {
        Reader r(item_bytes(id));
        r.u8();
        return r.str();
    }

    [[nodiscard]] ItemRecord decode(std::uint32_t id) const
    {
        Reader r(item_bytes(id));
        ItemRecord item;
        item.kind = static_cast<ItemKind>(r.u8());
        item.iri = r.str();
        item.label = r.str();
        item.score = r.u64();
        auto n = r.u32();
        item.synonyms.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i)
            item.synonyms.emplace_back(r.str());
        n = r.u32();
        item.infos.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i)
            item.infos.emplace_back(r.str());
        return item;
    }

    // First token id not less than `key`.
    [[nodiscard]] std::size_t lower_bound(std::string_view key) const
    {
        std::size_t lo = 0;
        std::size_t hi = header->n_tokens;
        while (lo < hi)
        {
            auto const mid = lo + (hi - lo) / 2;
            if (token(mid) < key)
                lo = mid + 1;
            else
                hi = mid;
        }
        return lo;
    }
};

KeywordIndex::KeywordIndex(std::unique_ptr<Image> image): _image(std::move(image)) {}
KeywordIndex::KeywordIndex(KeywordIndex&&) noexcept = default;
KeywordIndex& KeywordIndex::operator=(KeywordIndex&&) noexcept = default;
KeywordIndex::~KeywordIndex() = default;

KeywordIndex KeywordIndex::build(const std::vector<ItemRecord>& items)
{
    if (items.size() >= std::numeric_limits<std::uint32_t>::max())
        fail(ErrorKind::InvalidArgument, "too many items for one keyword index");

    // Intern tokens, collect (token, item, alias) postings.
    std::unordered_map<std::string, std::uint32_t> token_ids;
    std::vector<std::string> token_strings;
    std::vector<std::pair<std::uint32_t, Posting>> raw;
    raw.reserve(items.size() * 4);
    for (std::uint32_t id = 0; id < items.size(); ++id)
    {
        auto const aliases = items[id].aliases();
        for (std::uint32_t a = 0; a < aliases.size(); ++a)
            for (auto& tok: tokenize(aliases[a]))
            {
                auto [it, inserted] = token_ids.try_emplace(std::move(tok), static_cast<std::uint32_t>(token_strings.size()));
                if (inserted)
                    token_strings.push_back(it->first);
                raw.emplace_back(it->second, Posting { id, a });
            }
    }

    std::vector<std::uint32_t> token_order(token_strings.size());
    std::iota(token_order.begin(), token_order.end(), 0u);
    std::sort(token_order.begin(), token_order.end(), [&](auto a, auto b) { return token_strings[a] < token_strings[b]; });
    std::vector<std::uint32_t> token_rank(token_strings.size());
    for (std::uint32_t r = 0; r < token_order.size(); ++r)
        token_rank[token_order[r]] = r;
    for (auto& [tok, _]: raw)
        tok = token_rank[tok];
    std::sort(raw.begin(), raw.end(), [](const auto& x, const auto& y) {
        return std::tie(x.first, x.second.item, x.second.alias) < std::tie(y.first, y.second.item, y.second.alias);
    });
    raw.erase(std::unique(raw.begin(), raw.end(),
                          [](const auto& x, const auto& y) {
                              return x.first == y.first && x.second.item == y.second.item && x.second.alias == y.second.alias;
                          }),
              raw.end());

    std::vector<std::uint64_t> token_offsets { 0 };
    std::string token_blob;
    for (auto id: token_order)
    {
        token_blob += token_strings[id];
        token_offsets.push_back(token_blob.size());
    }
    std::vector<std::uint64_t> posting_offsets(token_strings.size() + 1, 0);
    std::vector<Posting> postings;
    postings.reserve(raw.size());
    for (const auto& [tok, p]: raw)
    {
        ++posting_offsets[tok + 1];
        postings.push_back(p);
    }
    std::partial_sum(posting_offsets.begin(), posting_offsets.end(), posting_offsets.begin());

    std::vector<std::uint64_t> item_offsets { 0 };
    std::string item_blob;
    std::vector<std::uint64_t> scores;
    scores.reserve(items.size());
    for (const auto& item: items)
    {
        item_blob += encode_item(item);
        item_offsets.push_back(item_blob.size());
        scores.push_back(item.score);
    }
    std::vector<std::uint32_t> iri_order(items.size());
    std::iota(iri_order.begin(), iri_order.end(), 0u);
    std::sort(iri_order.begin(), iri_order.end(), [&](auto a, auto b) { return items[a].iri < items[b].iri; });
    for (std::size_t i = 1; i < iri_order.size(); ++i)
        if (items[iri_order[i - 1]].iri == items[iri_order[i]].iri)
            fail(ErrorKind::Input, "duplicate IRI in keyword index input: " + items[iri_order[i]].iri);
    std::vector<std::uint32_t> iri_rank(items.size());
    for (std::uint32_t r = 0; r < iri_order.size(); ++r)
        iri_rank[iri_order[r]] = r;

    Header h {};
    std::memcpy(h.magic, magic, sizeof magic);
    h.version = format_version;
    h.n_tokens = token_strings.size();
    h.n_postings = postings.size();
    h.n_items = items.size();

    ImageWriter w;
    w.append(&h, sizeof h);
    h.off_token_offsets = w.append_vector(token_offsets);
    h.off_token_blob = w.append(token_blob.data(), token_blob.size());
    h.off_posting_offsets = w.append_vector(posting_offsets);
    h.off_postings = w.append_vector(postings);
    h.off_item_offsets = w.append_vector(item_offsets);
    h.off_item_blob = w.append(item_blob.data(), item_blob.size());
    h.off_scores = w.append_vector(scores);
    h.off_iri_rank = w.append_vector(iri_rank);
    h.off_iri_order = w.append_vector(iri_order);
    auto& bytes = w.bytes();
    bytes.resize(align8(bytes.size()));
    h.total_size = bytes.size();
    std::memcpy(bytes.data(), &h, sizeof h);

    auto image = std::make_unique<Image>();
    image->owned = std::move(bytes);
    image->bind(image->owned.data(), image->owned.size());
    return KeywordIndex(std::move(image));
}

void KeywordIndex::save(const std::filesystem::path& path) const
{
    auto const tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            fail(ErrorKind::Input, "cannot write index '" + path.string() + "'");
        out.write(reinterpret_cast<const char*>(_image->base), static_cast<std::streamsize>(_image->header->total_size));
        if (!out)
            fail(ErrorKind::Input, "failed writing index '" + path.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

KeywordIndex KeywordIndex::open(const std::filesystem::path& path, Storage storage)
{
    auto image = std::make_unique<Image>();
    if (storage == Storage::Mapped)
    {
        int const fd = ::open(path.c_str(), O_RDONLY);
        if (fd < 0)
            fail(ErrorKind::Input, "cannot open index '" + path.string() + "'");
        struct stat st {};
        if (::fstat(fd, &st) != 0 || st.st_size <= 0)
        {
            ::close(fd);
            fail(ErrorKind::Input, "cannot stat index '" + path.string() + "'");
        }
        void* p = ::mmap(nullptr, static_cast<std::size_t>(st.st_size), PROT_READ, MAP_PRIVATE, fd, 0);
        ::close(fd);
        if (p == MAP_FAILED)
            fail(ErrorKind::Input, "cannot map index '" + path.string() + "'");
        image->mapped = p;
        image->mapped_size = static_cast<std::size_t>(st.st_size);
        image->bind(static_cast<const std::byte*>(p), image->mapped_size);
    }
    else
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            fail(ErrorKind::Input, "cannot open index '" + path.string() + "'");
        in.seekg(0, std::ios::end);
        auto const size = static_cast<std::size_t>(in.tellg());
        in.seekg(0);
        image->owned.resize(size);
        in.read(reinterpret_cast<char*>(image->owned.data()), static_cast<std::streamsize>(size));
        if (!in)
            fail(ErrorKind::Input, "failed reading index '" + path.string() + "'");
        image->bind(image->owned.data(), size);
    }
    return KeywordIndex(std::move(image));
}

std::size_t KeywordIndex::size() const noexcept
{
    return _image->header->n_items;
}

std::size_t KeywordIndex::token_count() const noexcept
{
    return _image->header->n_tokens;
}

std::size_t KeywordIndex::posting_count() const noexcept
{
    return _image->header->n_postings;
}

ItemRecord KeywordIndex::item(std::uint32_t id) const
{
    if (id >= size())
        fail(ErrorKind::InvalidArgument, "item id out of range");
    return _image->decode(id);
}

std::optional<std::uint32_t> KeywordIndex::find(std::string_view iri) const
{
    const auto& img = *_image;
    auto it = std::lower_bound(img.iri_order.begin(), img.iri_order.end(), iri,
                               [&](std::uint32_t id, std::string_view key) { return img.item_iri(id) < key; });
    if (it != img.iri_order.end() && img.item_iri(*it) == iri)
        return *it;
    return std::nullopt;
}

KeywordSearchResult KeywordIndex::search(std::string_view query, std::size_t k, const std::unordered_set<std::string>* restrict_to) const
{
    if (restrict_to == nullptr)
        return search_ids(query, k, nullptr);
    std::unordered_set<std::uint32_t> ids;
    ids.reserve(restrict_to->size());
    for (const auto& iri: *restrict_to)
        if (auto id = find(iri))
            ids.insert(*id);
    return search_ids(query, k, &ids);
}

KeywordSearchResult KeywordIndex::search_ids(std::string_view query, std::size_t k, const std::unordered_set<std::uint32_t>* restrict_ids) const
{
    if (k == 0)
        fail(ErrorKind::InvalidArgument, "k must be at least 1");
    KeywordSearchResult result;
    auto const query_tokens = tokenize(query);
    if (query_tokens.empty() || (restrict_ids != nullptr && restrict_ids->empty()))
        return result;

    const auto& img = *_image;
    auto const key_of = [](const Posting& p) { return (std::uint64_t { p.item } << 32) | p.alias; };
    auto const allowed = [&](const Posting& p) { return restrict_ids == nullptr || restrict_ids->contains(p.item); };

    std::unordered_map<std::uint64_t, std::uint32_t> alias_scores;
    std::size_t touched = 0;
    for (const auto& qt: query_tokens)
    {
        std::unordered_map<std::uint64_t, std::uint8_t> contribution;
        auto t = img.lower_bound(qt);
        auto const n = img.header->n_tokens;
        if (t < n && img.token(t) == qt)
        {
            for (auto p = img.posting_offsets[t]; p < img.posting_offsets[t + 1]; ++p)
            {
                ++touched;
                if (allowed(img.postings[p]))
                    contribution[key_of(img.postings[p])] = 2;
            }
            ++t;
        }
        for (; t < n && img.token(t).starts_with(qt) && !result.approximate; ++t)
            for (auto p = img.posting_offsets[t]; p < img.posting_offsets[t + 1]; ++p)
            {
                if (++touched > _candidate_cap)
                {
                    result.approximate = true;
                    break;
                }
                if (allowed(img.postings[p]))
                    contribution.try_emplace(key_of(img.postings[p]), std::uint8_t { 1 });
            }
        for (const auto& [key, c]: contribution)
            alias_scores[key] += c;
    }

    std::unordered_map<std::uint32_t, std::uint32_t> item_scores;
    for (const auto& [key, s]: alias_scores)
    {
        auto& best = item_scores[static_cast<std::uint32_t>(key >> 32)];
        best = std::max(best, s);
    }

    std::vector<std::pair<std::uint32_t, std::uint32_t>> ranked(item_scores.begin(), item_scores.end());
    auto const better = [&](const auto& a, const auto& b) {
        if (a.second != b.second)
            return a.second > b.second;
        if (img.scores[a.first] != img.scores[b.first])
            return img.scores[a.first] > img.scores[b.first];
        return img.iri_rank[a.first] < img.iri_rank[b.first];
    };
    auto const keep = std::min(k, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), better);
    result.hits.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i)
        result.hits.push_back(KeywordHit { img.decode(ranked[i].first), ranked[i].second, i + 1 });
    return result;
}

} // namespace kgq
