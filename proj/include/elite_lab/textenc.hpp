#ifndef ELITE_LAB_TEXTENC_HPP
#define ELITE_LAB_TEXTENC_HPP

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "elite_lab/data.hpp"
#include "elite_lab/diffcore/nn.hpp"

// Word-level tokenizer, pseudo-word splicing and the frozen text encoder.
namespace elite::textenc {

using diff::Tensor;

inline constexpr const char* kPlaceholder = "S*";
inline constexpr const char* kBos = "<bos>";
inline constexpr const char* kEos = "<eos>";
inline constexpr const char* kUnk = "<unk>";

// ImageNet-style caption templates used while training the mappers.
inline const std::vector<std::string>& training_templates() {
    static const std::vector<std::string> t = {
        "a photo of a S*",
        "a rendering of a S*",
        "a cropped photo of the S*",
        "the photo of a S*",
        "a photo of a clean S*",
        "a photo of a dirty S*",
        "a dark photo of the S*",
        "a photo of my S*",
        "a photo of the cool S*",
        "a close-up photo of a S*",
        "a bright photo of the S*",
        "a cropped photo of a S*",
        "a photo of the S*",
        "a good photo of the S*",
        "a photo of one S*",
        "a close-up photo of the S*",
        "a rendition of the S*",
        "a photo of the clean S*",
        "a rendition of a S*",
        "a photo of a nice S*",
        "a good photo of a S*",
        "a photo of the nice S*",
        "a photo of the small S*",
        "a photo of the weird S*",
        "a photo of the large S*",
        "a photo of a cool S*",
        "a photo of a small S*",
    };
    return t;
}

// Ten editing prompts shaped like the standard subject-editing benchmark.
inline const std::vector<std::string>& evaluation_prompts() {
    static const std::vector<std::string> p = {
        "a S* in the jungle",
        "a S* in the snow",
        "a S* on the beach",
        "a S* on top of pink fabric",
        "a S* with a city in the background",
        "a red S*",
        "a purple S*",
        "a shiny S*",
        "a wet S*",
        "a cube shaped S*",
    };
    return p;
}

inline std::vector<std::string> split_words(const std::string& text) {
    std::istringstream is(text);
    std::vector<std::string> words;
    for (std::string w; is >> w;) words.push_back(w);
    return words;
}

class Vocabulary {
public:
    explicit Vocabulary(const std::vector<std::string>& words) {
        for (const char* s : {kBos, kEos, kUnk, kPlaceholder}) add(s);
        std::set<std::string> sorted(words.begin(), words.end());
        for (const auto& w : sorted) add(w);
    }

    // Templates, editing prompts and every category word of the dataset.
    static Vocabulary standard(const data::DatasetSpec& spec = {}) {
        std::vector<std::string> words;
        auto take = [&](const std::string& text) {
            for (auto& w : split_words(text))
                if (w != kPlaceholder) words.push_back(w);
        };
        for (const auto& t : training_templates()) take(t);
        for (const auto& t : evaluation_prompts()) take(t);
        for (const auto& s : spec.shapes) words.push_back(s.name);
        for (const auto& p : spec.palettes) words.push_back(p.name);
        for (const auto& t : spec.textures) words.push_back(t);
        return Vocabulary(words);
    }

    std::size_t size() const { return words_.size(); }
    std::size_t bos() const { return 0; }
    std::size_t eos() const { return 1; }
    std::size_t unk() const { return 2; }
    std::size_t placeholder() const { return 3; }

    std::size_t id(const std::string& w) const {
        auto it = index_.find(w);
        return it == index_.end() ? unk() : it->second;
    }
    bool contains(const std::string& w) const { return index_.count(w) != 0; }
    const std::string& word(std::size_t id) const { return words_.at(id); }

private:
    void add(const std::string& w) {
        if (index_.emplace(w, words_.size()).second) words_.push_back(w);
    }
    std::vector<std::string> words_;
    std::map<std::string, std::size_t> index_;
};

struct TokenizedPrompt {
    std::vector<std::size_t> ids;  // <bos> content... <eos>
    std::optional<std::size_t> placeholder_position;
    std::string text;

    std::size_t content_tokens() const { return ids.size() - 2; }

    // The unconditional prompt: markers only.
    static TokenizedPrompt empty(const Vocabulary& v) { return {{v.bos(), v.eos()}, std::nullopt, ""}; }
};

inline TokenizedPrompt tokenize(const std::string& text, const Vocabulary& vocab) {
    const auto words = split_words(text);
    if (words.empty()) throw ContractError("empty prompt");
    TokenizedPrompt tp;
    tp.text = text;
    tp.ids.push_back(vocab.bos());
    for (const auto& w : words) {
        if (w == kPlaceholder) {
            if (tp.placeholder_position) throw ContractError("prompt holds more than one placeholder: " + text);
            tp.placeholder_position = tp.ids.size();
        }
        tp.ids.push_back(vocab.id(w));
    }
    tp.ids.push_back(vocab.eos());
    return tp;
}

inline std::string detokenize(const TokenizedPrompt& tp, const Vocabulary& vocab) {
    std::string out;
    for (std::size_t i = 1; i + 1 < tp.ids.size(); ++i) {
        if (!out.empty()) out += ' ';
        out += vocab.word(tp.ids[i]);
    }
    return out;
}

// Replaces the placeholder with `word`.
inline std::string substitute(const std::string& prompt, const std::string& word) {
    const auto pos = prompt.find(kPlaceholder);
    if (pos == std::string::npos) throw ContractError("prompt has no placeholder: " + prompt);
    std::string out = prompt;
    out.replace(pos, std::string(kPlaceholder).size(), word);
    return out;
}

template <class Rng>
const std::string& sample_template(Rng& rng, const std::vector<std::string>& templates = training_templates()) {
    if (templates.empty()) throw ConfigError("template list is empty");
    std::uniform_int_distribution<std::size_t> pick(0, templates.size() - 1);
    return templates[pick(rng)];
}

template <class T>
struct WordEmbeddingSet {
    Tensor<T> words;  // [N, d], row 0 from the deepest tap
    std::vector<std::size_t> tap_layer_ids;
    static constexpr std::size_t primary_index = 0;

    std::size_t count() const { return words.rows(); }
    std::size_t dim() const { return words.cols(); }
};

enum class SpliceMode { PrimaryOnly, Full };

template <class T>
struct EmbeddedSequence {
    Tensor<T> embeddings;  // [L, d]
    std::optional<std::size_t> primary_position;  // row of w0 (or of S* itself)
    std::size_t spliced_words = 0;

    std::size_t length() const { return embeddings.rows(); }
};

struct TextEncoderConfig {
    std::size_t dim = 64;       // word-embedding width d
    std::size_t ctx_dim = 64;   // output feature width d_ctx
    std::size_t layers = 2;
    std::size_t mlp_hidden = 128;
    std::size_t max_length = 32;
};

template <class T>
struct TextEncoder {
    TextEncoderConfig config;
    Tensor<T> token_table;  // [vocab, d]
    Tensor<T> pos_embed;    // [max_length, d]
    std::vector<diff::TransformerBlock<T>> blocks;
    diff::LayerNorm<T> final_ln;
    diff::Linear<T> out_proj;  // d -> d_ctx, bias-free

    TextEncoder() = default;
    TextEncoder(const TextEncoderConfig& cfg, std::size_t vocab_size, diff::Rng& rng)
        : config(cfg),
          token_table(diff::param_normal<T>({vocab_size, cfg.dim}, rng, 0.02)),
          pos_embed(diff::param_normal<T>({cfg.max_length, cfg.dim}, rng, 0.01)),
          final_ln(cfg.dim),
          out_proj(cfg.dim, cfg.ctx_dim, rng, false) {
        for (std::size_t i = 0; i < cfg.layers; ++i) blocks.emplace_back(cfg.dim, cfg.mlp_hidden, rng);
    }

    Tensor<T> lookup(const std::vector<std::size_t>& ids) const { return diff::gather_rows(token_table, ids); }

    // Token embeddings with the placeholder slot replaced by w0
    // (PrimaryOnly) or by all N rows of v (Full).
    EmbeddedSequence<T> inject_concept(const TokenizedPrompt& tp, const WordEmbeddingSet<T>* v,
                                       SpliceMode mode) const {
        EmbeddedSequence<T> seq;
        if (!v) {
            seq.embeddings = lookup(tp.ids);
            seq.primary_position = tp.placeholder_position;
            return seq;
        }
        if (!tp.placeholder_position) throw ContractError("concept embeddings supplied but the prompt has no S*");
        if (v->dim() != config.dim) throw ShapeError("word embedding width differs from the token table");
        const std::size_t pos = *tp.placeholder_position;
        std::vector<Tensor<T>> parts;
        parts.push_back(lookup(std::vector<std::size_t>(tp.ids.begin(), tp.ids.begin() + static_cast<long>(pos))));
        const std::size_t n = mode == SpliceMode::Full ? v->count() : 1;
        parts.push_back(n == v->count() ? v->words : diff::slice_rows(v->words, 0, n));
        parts.push_back(lookup(std::vector<std::size_t>(tp.ids.begin() + static_cast<long>(pos) + 1, tp.ids.end())));
        seq.embeddings = diff::concat_rows(parts);
        seq.primary_position = pos;
        seq.spliced_words = n;
        return seq;
    }

    // Per-token context features [L, d_ctx].
    Tensor<T> encode(const EmbeddedSequence<T>& seq) const {
        const std::size_t len = seq.length();
        if (len > config.max_length)
            throw LengthError("sequence of " + std::to_string(len) + " tokens exceeds the maximum of " +
                              std::to_string(config.max_length));
        auto x = diff::add(seq.embeddings, diff::slice_rows(pos_embed, 0, len));
        for (const auto& b : blocks) x = b(x);
        return out_proj(final_ln(x));
    }

    Tensor<T> encode(const TokenizedPrompt& tp) const { return encode(inject_concept(tp, nullptr, SpliceMode::Full)); }

    void collect(diff::ParamList<T>& out, const std::string& prefix) const {
        out.emplace_back(prefix + ".token_table", token_table);
        out.emplace_back(prefix + ".pos_embed", pos_embed);
        for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, prefix + ".block" + std::to_string(i));
        final_ln.collect(out, prefix + ".final_ln");
        out_proj.collect(out, prefix + ".out_proj");
    }
};

}  // namespace elite::textenc

#endif  // ELITE_LAB_TEXTENC_HPP
