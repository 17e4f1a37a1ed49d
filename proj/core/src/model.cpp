#include "updet/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace updet {

namespace {

Tensor lin(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape) {
    return add(matmul(x, w, tape), b, tape);
}

constexpr double kLnEps = 1e-5;

}  // namespace

std::string to_string(BlockMode m) {
    return m == BlockMode::standard ? "standard" : "attention_only";
}

std::string to_string(HeadMode m) {
    switch (m) {
        case HeadMode::updet: return "updet";
        case HeadMode::vanilla: return "vanilla";
        case HeadMode::aggregation: return "aggregation";
        case HeadMode::gru: return "gru";
        case HeadMode::updet_mismatched: return "updet_mismatched";
    }
    return "?";
}

std::string to_string(TemporalMode m) {
    switch (m) {
        case TemporalMode::global: return "global";
        case TemporalMode::individual: return "individual";
        case TemporalMode::none: return "none";
    }
    return "?";
}

BlockMode block_mode_from(const std::string& s) {
    if (s == "standard") return BlockMode::standard;
    if (s == "attention_only") return BlockMode::attention_only;
    throw ConfigError("unknown block_mode: " + s);
}

HeadMode head_mode_from(const std::string& s) {
    if (s == "updet") return HeadMode::updet;
    if (s == "vanilla") return HeadMode::vanilla;
    if (s == "aggregation") return HeadMode::aggregation;
    if (s == "gru") return HeadMode::gru;
    if (s == "updet_mismatched") return HeadMode::updet_mismatched;
    throw ConfigError("unknown head_mode: " + s);
}

TemporalMode temporal_mode_from(const std::string& s) {
    if (s == "global") return TemporalMode::global;
    if (s == "individual") return TemporalMode::individual;
    if (s == "none") return TemporalMode::none;
    throw ConfigError("unknown temporal_mode: " + s);
}

void ModelConfig::validate() const {
    if (d_emb < 1 || n_heads < 1 || n_layers < 1 || d_channel < 1 || rnn_hidden < 1)
        throw ConfigError("model dimensions must be positive");
}

Model::Model(ModelConfig cfg, ActionGroupSpec groups, uint64_t init_seed)
    : cfg_(cfg), groups_(groups) {
    cfg_.validate();
    groups_.validate();
    Rng rng(init_seed);

    if (cfg_.head_mode == HeadMode::gru) {
        // Flat-observation recurrent baseline: encoder and action head are
        // sized by the scenario, only the cell transfers across sizes.
        const int flat = groups_.n_entities() * kFeatWidth;
        enc_w_ = params_.add_linear_weight("enc.w", flat, cfg_.rnn_hidden, rng);
        enc_b_ = params_.add_zeros("enc.b", {cfg_.rnn_hidden});
        gru_ = make_gru_params(params_, "cell", cfg_.rnn_hidden, cfg_.rnn_hidden, rng);
        head_w_ = params_.add_linear_weight("head.w", cfg_.rnn_hidden, groups_.n_actions(), rng);
        head_b_ = params_.add_zeros("head.b", {groups_.n_actions()});
        return;
    }

    if (cfg_.head_mode == HeadMode::vanilla && groups_.n_actions() > groups_.n_entities())
        throw ConfigError("vanilla head maps one entity token to one action; " +
                          std::to_string(groups_.n_actions()) + " actions exceed " +
                          std::to_string(groups_.n_entities()) + " entities");

    const int d = cfg_.d_emb;
    const int attn_width = cfg_.head_dim() * cfg_.n_heads;
    embed_w_ = params_.add_linear_weight("embed.w", kFeatWidth, d, rng);
    embed_b_ = params_.add_zeros("embed.b", {d});
    layers_.resize(static_cast<std::size_t>(cfg_.n_layers));
    for (int l = 0; l < cfg_.n_layers; ++l) {
        LayerParams& lp = layers_[static_cast<std::size_t>(l)];
        const std::string p = "layer" + std::to_string(l) + ".";
        lp.wq = params_.add_linear_weight(p + "wq", d, attn_width, rng);
        lp.bq = params_.add_zeros(p + "bq", {attn_width});
        lp.wk = params_.add_linear_weight(p + "wk", d, attn_width, rng);
        lp.bk = params_.add_zeros(p + "bk", {attn_width});
        lp.wv = params_.add_linear_weight(p + "wv", d, attn_width, rng);
        lp.bv = params_.add_zeros(p + "bv", {attn_width});
        lp.wo = params_.add_linear_weight(p + "wo", attn_width, d, rng);
        lp.bo = params_.add_zeros(p + "bo", {d});
        if (cfg_.block_mode == BlockMode::standard) {
            lp.ln1_g = params_.add_ones(p + "ln1.g", {d});
            lp.ln1_b = params_.add_zeros(p + "ln1.b", {d});
            lp.ff1_w = params_.add_linear_weight(p + "ff1.w", d, cfg_.d_channel, rng);
            lp.ff1_b = params_.add_zeros(p + "ff1.b", {cfg_.d_channel});
            lp.ff2_w = params_.add_linear_weight(p + "ff2.w", cfg_.d_channel, d, rng);
            lp.ff2_b = params_.add_zeros(p + "ff2.b", {d});
            lp.ln2_g = params_.add_ones(p + "ln2.g", {d});
            lp.ln2_b = params_.add_zeros(p + "ln2.b", {d});
        }
    }

    switch (cfg_.head_mode) {
        case HeadMode::updet:
        case HeadMode::updet_mismatched:
            basic_w_ = params_.add_linear_weight("head.basic.w", d, kBasicActions, rng);
            basic_b_ = params_.add_zeros("head.basic.b", {kBasicActions});
            attack_w_ = params_.add_linear_weight("head.attack.w", d, 1, rng);
            attack_b_ = params_.add_zeros("head.attack.b", {1});
            break;
        case HeadMode::aggregation:
            agg_w_ = params_.add_linear_weight("head.agg.w", d, groups_.n_actions(), rng);
            agg_b_ = params_.add_zeros("head.agg.b", {groups_.n_actions()});
            break;
        case HeadMode::vanilla:
            for (int j = 0; j < groups_.n_actions(); ++j) {
                const std::string p = "head.slot" + std::to_string(j) + ".";
                slot_w_.push_back(params_.add_linear_weight(p + "w", d, 1, rng));
                slot_b_.push_back(params_.add_zeros(p + "b", {1}));
            }
            break;
        default: break;
    }
}

HiddenState Model::initial_hidden(int batch) const {
    HiddenState h;
    if (cfg_.head_mode == HeadMode::gru) {
        h.mode = TemporalMode::global;
        h.tokens = Tensor::zeros({batch, cfg_.rnn_hidden});
        return h;
    }
    h.mode = cfg_.temporal_mode;
    switch (cfg_.temporal_mode) {
        case TemporalMode::global:
            h.tokens = Tensor::zeros({batch, 1, cfg_.d_emb});
            break;
        case TemporalMode::individual:
            h.tokens = Tensor::zeros({batch, groups_.n_entities(), cfg_.d_emb});
            break;
        case TemporalMode::none: break;
    }
    return h;
}

Tensor Model::embed_entities(const Tensor& obs, Tape* tape) const {
    if (obs.rank() != 3 || obs.dim(2) != kFeatWidth)
        throw ShapeError("embed_entities: expected [B, n_entities, " +
                         std::to_string(kFeatWidth) + "], got " + shape_str(obs.shape()));
    return lin(obs, embed_w_, embed_b_, tape);
}

Tensor Model::attention_block(const Tensor& x, const LayerParams& lp, Tape* tape,
                              std::vector<std::vector<double>>* raw_sink) const {
    const int hd = cfg_.head_dim();
    Tensor q = lin(x, lp.wq, lp.bq, tape);
    Tensor k = lin(x, lp.wk, lp.bk, tape);
    Tensor v = lin(x, lp.wv, lp.bv, tape);
    std::vector<Tensor> ctx;
    ctx.reserve(static_cast<std::size_t>(cfg_.n_heads));
    for (int h = 0; h < cfg_.n_heads; ++h) {
        Tensor qh = slice(q, 2, h * hd, hd, tape);
        Tensor kh = slice(k, 2, h * hd, hd, tape);
        Tensor vh = slice(v, 2, h * hd, hd, tape);
        Tensor scores = bmm(qh, kh, /*transpose_b=*/true, tape);
        Tensor attn = softmax_scaled(scores, hd, tape);
        if (raw_sink) raw_sink->push_back(attn.values());
        ctx.push_back(bmm(attn, vh, /*transpose_b=*/false, tape));
    }
    Tensor merged = concat(ctx, 2, tape);
    return lin(merged, lp.wo, lp.bo, tape);
}

Model::TransformerOut Model::transformer_forward(const Tensor& tokens, const HiddenState& hidden,
                                                 Tape* tape, AttentionMaps* sink) const {
    if (cfg_.head_mode == HeadMode::gru)
        throw InvalidState("transformer_forward on the recurrent baseline");
    const int n_ent = tokens.dim(1);
    int n_hidden = 0;
    Tensor x = tokens;
    if (cfg_.temporal_mode != TemporalMode::none) {
        if (!hidden.tokens.defined() || hidden.tokens.rank() != 3 ||
            hidden.tokens.dim(0) != tokens.dim(0) || hidden.tokens.dim(2) != cfg_.d_emb)
            throw ShapeError("hidden state does not match token batch " +
                             shape_str(tokens.shape()));
        n_hidden = hidden.tokens.dim(1);
        const int want = cfg_.temporal_mode == TemporalMode::global ? 1 : n_ent;
        if (n_hidden != want)
            throw ShapeError("hidden state carries " + std::to_string(n_hidden) +
                             " tokens, expected " + std::to_string(want));
        x = concat({hidden.tokens, tokens}, 1, tape);
    }

    if (sink) {
        sink->tokens = x.dim(1);
        sink->entities = n_ent;
        sink->raw.clear();
    }
    for (const LayerParams& lp : layers_) {
        std::vector<std::vector<double>> raw;
        std::vector<std::vector<double>>* raw_ptr = sink ? &raw : nullptr;
        if (cfg_.block_mode == BlockMode::standard) {
            Tensor a = attention_block(layer_norm(x, lp.ln1_g, lp.ln1_b, kLnEps, tape), lp, tape,
                                       raw_ptr);
            x = add(x, a, tape);
            Tensor f = layer_norm(x, lp.ln2_g, lp.ln2_b, kLnEps, tape);
            Tensor ff = lin(relu(lin(f, lp.ff1_w, lp.ff1_b, tape), tape), lp.ff2_w, lp.ff2_b, tape);
            x = add(x, ff, tape);
        } else {
            x = attention_block(x, lp, tape, raw_ptr);
        }
        if (sink) sink->raw.push_back(std::move(raw));
    }

    TransformerOut out;
    out.hidden.mode = cfg_.temporal_mode;
    if (cfg_.temporal_mode == TemporalMode::none) {
        out.entity_tokens = x;
    } else {
        out.hidden.tokens = slice(x, 1, 0, n_hidden, tape);
        out.entity_tokens = slice(x, 1, n_hidden, n_ent, tape);
    }
    return out;
}

Tensor Model::policy_decode(const Tensor& entity_tokens, Tape* tape) const {
    if (entity_tokens.rank() != 3 || entity_tokens.dim(1) != groups_.n_entities())
        throw ConfigError("policy_decode: got " + shape_str(entity_tokens.shape()) +
                          " for " + std::to_string(groups_.n_entities()) + " entity slots");
    const int batch = entity_tokens.dim(0);
    switch (cfg_.head_mode) {
        case HeadMode::updet:
        case HeadMode::updet_mismatched: {
            Tensor self_tok = slice(entity_tokens, 1, groups_.self_slot(), 1, tape);
            Tensor basic = reshape(lin(self_tok, basic_w_, basic_b_, tape),
                                   {batch, kBasicActions}, tape);
            Tensor enemy = slice(entity_tokens, 1, groups_.enemy_slot(0), groups_.n_enemies, tape);
            if (cfg_.head_mode == HeadMode::updet_mismatched && groups_.n_enemies > 1) {
                // Deranged pairing: attack j is scored from enemy token j+1 (mod n).
                enemy = concat({slice(enemy, 1, 1, groups_.n_enemies - 1, tape),
                                slice(enemy, 1, 0, 1, tape)},
                               1, tape);
            }
            Tensor attack = reshape(lin(enemy, attack_w_, attack_b_, tape),
                                    {batch, groups_.n_enemies}, tape);
            return concat({basic, attack}, 1, tape);
        }
        case HeadMode::aggregation: {
            Tensor pooled = mean_axis(entity_tokens, 1, tape);
            return lin(pooled, agg_w_, agg_b_, tape);
        }
        case HeadMode::vanilla: {
            std::vector<Tensor> qs;
            for (int j = 0; j < groups_.n_actions(); ++j) {
                Tensor tok = reshape(slice(entity_tokens, 1, j, 1, tape), {batch, cfg_.d_emb},
                                     tape);
                qs.push_back(lin(tok, slot_w_[static_cast<std::size_t>(j)],
                                 slot_b_[static_cast<std::size_t>(j)], tape));
            }
            return concat(qs, 1, tape);
        }
        case HeadMode::gru:
            throw InvalidState("policy_decode on the recurrent baseline");
    }
    throw InvalidState("unreachable");
}

Model::Result Model::forward(const Tensor& obs, const HiddenState& hidden, Tape* tape) const {
    if (obs.rank() != 3 || obs.dim(1) != groups_.n_entities() || obs.dim(2) != kFeatWidth)
        throw ShapeError("forward: expected [B, " + std::to_string(groups_.n_entities()) + ", " +
                         std::to_string(kFeatWidth) + "], got " + shape_str(obs.shape()));
    Result r;
    if (cfg_.head_mode == HeadMode::gru) {
        const int batch = obs.dim(0);
        Tensor flat = reshape(obs, {batch, groups_.n_entities() * kFeatWidth}, tape);
        Tensor enc = relu(lin(flat, enc_w_, enc_b_, tape), tape);
        Tensor h = gru_cell(enc, hidden.tokens, gru_, tape);
        r.q = lin(h, head_w_, head_b_, tape);
        r.hidden.mode = TemporalMode::global;
        r.hidden.tokens = h;
        return r;
    }
    Tensor tokens = embed_entities(obs, tape);
    TransformerOut t = transformer_forward(tokens, hidden, tape);
    r.q = policy_decode(t.entity_tokens, tape);
    r.hidden = t.hidden;
    return r;
}

AttentionMaps Model::export_attention(const ObservationSet& obs, const HiddenState& hidden) const {
    if (cfg_.head_mode == HeadMode::gru)
        throw InvalidState("attention export requires an attention-based head");
    Tensor obs_t = obs_batch_tensor(std::span<const ObservationSet>(&obs, 1));
    AttentionMaps maps;
    Tensor tokens = embed_entities(obs_t, nullptr);
    transformer_forward(tokens, hidden, nullptr, &maps);

    // Grouped matrix: final layer, averaged over heads, hidden rows/columns
    // excluded, each row renormalized to sum 1.
    const int t_all = maps.tokens;
    const int n_ent = maps.entities;
    const int off = t_all - n_ent;
    const auto& last = maps.raw.back();
    maps.grouped.assign(static_cast<std::size_t>(n_ent) * n_ent, 0.0);
    for (int r = 0; r < n_ent; ++r) {
        double row_sum = 0.0;
        for (int c = 0; c < n_ent; ++c) {
            double v = 0.0;
            for (const auto& head : last)
                v += head[static_cast<std::size_t>((r + off) * t_all + (c + off))];
            v /= static_cast<double>(last.size());
            maps.grouped[static_cast<std::size_t>(r * n_ent + c)] = v;
            row_sum += v;
        }
        if (row_sum > 0.0)
            for (int c = 0; c < n_ent; ++c)
                maps.grouped[static_cast<std::size_t>(r * n_ent + c)] /= row_sum;
    }
    return maps;
}

Tensor obs_batch_tensor(std::span<const ObservationSet> sets) {
    if (sets.empty()) throw InvalidArgument("obs_batch_tensor: empty batch");
    const int n_ent = sets[0].n_entities();
    std::vector<double> data;
    data.reserve(sets.size() * static_cast<std::size_t>(n_ent) * kFeatWidth);
    for (const ObservationSet& o : sets) {
        if (o.n_entities() != n_ent)
            throw ShapeError("obs_batch_tensor: inconsistent entity counts in batch");
        data.insert(data.end(), o.features.begin(), o.features.end());
    }
    return Tensor::from({static_cast<int>(sets.size()), n_ent, kFeatWidth}, std::move(data));
}

std::vector<double> apply_action_mask(const std::vector<double>& q,
                                      const std::vector<uint8_t>& mask) {
    if (q.size() != mask.size())
        throw ShapeError("apply_action_mask: " + std::to_string(q.size()) + " q-values vs " +
                         std::to_string(mask.size()) + " mask entries");
    bool any = false;
    std::vector<double> out(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        out[i] = mask[i] ? q[i] : std::numeric_limits<double>::lowest();
        any = any || mask[i];
    }
    if (!any) throw InvalidState("apply_action_mask: no available action");
    return out;
}

int greedy_action(const std::vector<double>& q, const std::vector<uint8_t>& mask) {
    const std::vector<double> masked = apply_action_mask(q, mask);
    std::size_t best = 0;
    for (std::size_t i = 1; i < masked.size(); ++i)
        if (masked[i] > masked[best]) best = i;
    return static_cast<int>(best);
}

}  // namespace updet
