#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "updet/gru.hpp"
#include "updet/obs.hpp"
#include "updet/ops.hpp"
#include "updet/params.hpp"

namespace updet {

enum class BlockMode { standard, attention_only };
enum class HeadMode { updet, vanilla, aggregation, gru, updet_mismatched };
enum class TemporalMode { global, individual, none };

std::string to_string(BlockMode m);
std::string to_string(HeadMode m);
std::string to_string(TemporalMode m);
BlockMode block_mode_from(const std::string& s);
HeadMode head_mode_from(const std::string& s);
TemporalMode temporal_mode_from(const std::string& s);

struct ModelConfig {
    int d_emb = 32;
    int n_heads = 3;
    int n_layers = 2;
    int d_channel = 32;  // feed-forward width
    BlockMode block_mode = BlockMode::standard;
    HeadMode head_mode = HeadMode::updet;
    TemporalMode temporal_mode = TemporalMode::global;
    int rnn_hidden = 64;  // recurrent baseline width

    // d_emb need not divide n_heads: heads are ceil(d_emb/n_heads) wide and
    // their concatenation is projected back to d_emb.
    int head_dim() const { return (d_emb + n_heads - 1) / n_heads; }
    void validate() const;
};

// Temporal carry between timesteps. Zero at episode start. Shape depends on
// the temporal unit: one token [B,1,d] (global), one token per entity slot
// [B,n_ent,d] (individual), a flat state [B,H] for the recurrent baseline,
// or nothing.
struct HiddenState {
    TemporalMode mode = TemporalMode::none;
    Tensor tokens;  // undefined when the model carries no state
};

// Raw per-layer, per-head attention weights plus the entity-level grouped
// matrix (final layer, head-averaged, hidden token rows/columns dropped and
// rows renormalized).
struct AttentionMaps {
    int tokens = 0;
    int entities = 0;
    std::vector<std::vector<std::vector<double>>> raw;  // [layer][head], tokens x tokens
    std::vector<double> grouped;                        // entities x entities
};

// Individual action-value function. The default head embeds each observation
// entity with one shared linear map, runs the token set through multi-head
// self-attention blocks alongside the hidden token(s), and decodes Q-values
// per action group: a shared 6-way head on the self token, a shared scalar
// head on each enemy token, ally tokens discarded. No parameter depends on
// the scenario size, so one checkpoint drives any team configuration.
//
// Comparison heads: `vanilla` projects each entity token to at most one
// action (and therefore rejects scenarios with more actions than entities),
// `aggregation` mean-pools tokens into one embedding with a scenario-sized
// action head, `gru` is the flat-observation recurrent baseline, and
// `updet_mismatched` rotates the enemy-token/attack pairing by one slot.
class Model {
public:
    Model(ModelConfig cfg, ActionGroupSpec groups, uint64_t init_seed);

    struct Result {
        Tensor q;  // [B, n_actions]
        HiddenState hidden;
    };

    // obs: [B, n_entities, kFeatWidth].
    Result forward(const Tensor& obs, const HiddenState& hidden, Tape* tape) const;

    HiddenState initial_hidden(int batch) const;

    // One shared map over every entity row: [B, n_ent, F] -> [B, n_ent, d_emb].
    Tensor embed_entities(const Tensor& obs, Tape* tape) const;

    // Runs the attention blocks over {hidden tokens, entity tokens}. Returns
    // entity output tokens [B, n_ent, d_emb] and the carried-forward hidden.
    struct TransformerOut {
        Tensor entity_tokens;
        HiddenState hidden;
    };
    TransformerOut transformer_forward(const Tensor& tokens, const HiddenState& hidden,
                                       Tape* tape, AttentionMaps* sink = nullptr) const;

    // Entity output tokens -> [B, 6 + n_enemies] Q-values.
    Tensor policy_decode(const Tensor& entity_tokens, Tape* tape) const;

    AttentionMaps export_attention(const ObservationSet& obs, const HiddenState& hidden) const;

    const ModelConfig& config() const { return cfg_; }
    const ActionGroupSpec& groups() const { return groups_; }
    int n_actions() const { return groups_.n_actions(); }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

private:
    struct LayerParams {
        Tensor wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor ln1_g, ln1_b, ln2_g, ln2_b;
        Tensor ff1_w, ff1_b, ff2_w, ff2_b;
    };

    Tensor attention_block(const Tensor& x, const LayerParams& lp, Tape* tape,
                           std::vector<std::vector<double>>* raw_sink) const;

    ModelConfig cfg_;
    ActionGroupSpec groups_;
    ParamStore params_;

    Tensor embed_w_, embed_b_;
    std::vector<LayerParams> layers_;
    Tensor basic_w_, basic_b_, attack_w_, attack_b_;   // updet heads
    Tensor agg_w_, agg_b_;                             // aggregation head
    std::vector<Tensor> slot_w_, slot_b_;              // vanilla per-slot heads
    Tensor enc_w_, enc_b_, head_w_, head_b_;           // gru encoder/head
    GruParams gru_;
};

// Flattens per-agent observations into a [B, n_entities, kFeatWidth] batch.
Tensor obs_batch_tensor(std::span<const ObservationSet> sets);

// Replaces unavailable entries with the most negative finite value so greedy
// selection can never pick them. Requires at least one available action.
std::vector<double> apply_action_mask(const std::vector<double>& q,
                                      const std::vector<uint8_t>& mask);

// Masked argmax; ties resolve to the lowest index.
int greedy_action(const std::vector<double>& q, const std::vector<uint8_t>& mask);

}  // namespace updet
