#pragma once
// The encoder. An input byte sequence is embedded as [byte-embedding ||
// position-embedding], combined by a two-layer feed-forward into the model
// width, then passed through a stack of multi-head self-attention layers:
//
//   q_i = W_q e_i + b_q   (per head, width d_emb/heads; likewise k, v)
//   s_ij = q_i . k_j / scale,   s'_i = softmax over non-pad keys
//   head_h = S' V,   A = [head_1 || ... || head_H]
//   u = LN1(x + dropout(A))
//   x' = LN2(u + dropout(W2 gelu(W1 u + b1) + b2))
//
// Pad positions participate nowhere: pad keys carry exactly zero attention
// weight, pad query rows are defined as all-zero attention rows, and the
// losses skip pad outputs, so no gradient ever reaches a pad position.
//
// Two output heads share the encoder: a masked-byte head
// (gelu two-layer, width mlm_targets) and a per-position classification head
// softmax(tanh(E W1) W2), bias-free.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "xda/config.hpp"
#include "xda/errors.hpp"
#include "xda/rng.hpp"
#include "xda/tensor.hpp"
#include "xda/tokenizer.hpp"

namespace xda {

template <class T>
struct LayerParams {
    Mat<T> wq, wk, wv; // [d, d]; column block h*dh..(h+1)*dh is head h's projection
    Vec<T> bq, bk, bv; // [d]
    Mat<T> w1;         // [d, d_ff]
    Vec<T> b1;
    Mat<T> w2;         // [d_ff, d]
    Vec<T> b2;
    Vec<T> ln1_g, ln1_b, ln2_g, ln2_b;
};

template <class T>
struct TensorRef {
    std::string name;
    T* data;
    Eigen::Index rows, cols;
    Eigen::Index size() const { return rows * cols; }
};

template <class T>
struct ModelParameters {
    ModelConfig cfg;
    Mat<T> e_byte; // [vocab, d]
    Mat<T> e_pos;  // [seq_len, d]
    Mat<T> f_w1;   // [2d, d_ff]
    Vec<T> f_b1;
    Mat<T> f_w2;   // [d_ff, d]
    Vec<T> f_b2;
    std::vector<LayerParams<T>> layers;
    Mat<T> mlm_w1; // [d, d]
    Vec<T> mlm_b1;
    Mat<T> mlm_w2; // [d, mlm_targets]
    Vec<T> mlm_b2;
    Mat<T> cls_w1; // [d, d], bias-free head
    Mat<T> cls_w2; // [d, num_classes]

    // Allocates all tensors zero-filled.
    static ModelParameters make(const ModelConfig& cfg) {
        cfg.validate();
        ModelParameters p;
        p.cfg = cfg;
        const auto d = static_cast<Eigen::Index>(cfg.d_emb);
        const auto ff = static_cast<Eigen::Index>(cfg.d_ff);
        p.e_byte = Mat<T>::Zero(cfg.vocab, d);
        p.e_pos = Mat<T>::Zero(cfg.seq_len, d);
        p.f_w1 = Mat<T>::Zero(2 * d, ff);
        p.f_b1 = Vec<T>::Zero(ff);
        p.f_w2 = Mat<T>::Zero(ff, d);
        p.f_b2 = Vec<T>::Zero(d);
        p.layers.resize(cfg.layers);
        for (auto& l : p.layers) {
            l.wq = Mat<T>::Zero(d, d);
            l.wk = Mat<T>::Zero(d, d);
            l.wv = Mat<T>::Zero(d, d);
            l.bq = Vec<T>::Zero(d);
            l.bk = Vec<T>::Zero(d);
            l.bv = Vec<T>::Zero(d);
            l.w1 = Mat<T>::Zero(d, ff);
            l.b1 = Vec<T>::Zero(ff);
            l.w2 = Mat<T>::Zero(ff, d);
            l.b2 = Vec<T>::Zero(d);
            l.ln1_g = Vec<T>::Zero(d);
            l.ln1_b = Vec<T>::Zero(d);
            l.ln2_g = Vec<T>::Zero(d);
            l.ln2_b = Vec<T>::Zero(d);
        }
        p.mlm_w1 = Mat<T>::Zero(d, d);
        p.mlm_b1 = Vec<T>::Zero(d);
        p.mlm_w2 = Mat<T>::Zero(d, cfg.mlm_targets);
        p.mlm_b2 = Vec<T>::Zero(cfg.mlm_targets);
        p.cls_w1 = Mat<T>::Zero(d, d);
        p.cls_w2 = Mat<T>::Zero(d, cfg.num_classes);
        return p;
    }

    // Weight init: normal(0, 0.02); biases and LN offsets zero; LN gains one.
    // The position table is learned but starts sinusoidal (amplitude matched
    // to the byte-embedding RMS): the rotational structure lets attention
    // express fixed-offset lookups from the first steps, which byte streams
    // lean on heavily.
    static ModelParameters init(const ModelConfig& cfg, uint64_t seed) {
        ModelParameters p = make(cfg);
        Rng rng = Rng::derive(seed, Stream::init);
        init_normal(p.e_byte, rng);
        for (Eigen::Index pos = 0; pos < p.e_pos.rows(); ++pos)
            for (Eigen::Index j = 0; j < p.e_pos.cols(); ++j) {
                const double angle =
                    static_cast<double>(pos) /
                    std::pow(10000.0, static_cast<double>(j - (j % 2)) / static_cast<double>(cfg.d_emb));
                p.e_pos(pos, j) = static_cast<T>(0.03 * (j % 2 ? std::cos(angle) : std::sin(angle)));
            }
        init_normal(p.f_w1, rng);
        init_normal(p.f_w2, rng);
        for (auto& l : p.layers) {
            init_normal(l.wq, rng);
            init_normal(l.wk, rng);
            init_normal(l.wv, rng);
            init_normal(l.w1, rng);
            init_normal(l.w2, rng);
            l.ln1_g.setOnes();
            l.ln2_g.setOnes();
        }
        init_normal(p.mlm_w1, rng);
        init_normal(p.mlm_w2, rng);
        init_normal(p.cls_w1, rng);
        init_normal(p.cls_w2, rng);
        return p;
    }

    // Canonical tensor enumeration: defines checkpoint layout, optimizer
    // state order and gradient-check traversal.
    std::vector<TensorRef<T>> tensors() {
        std::vector<TensorRef<T>> out;
        auto add_m = [&](const std::string& name, Mat<T>& m) {
            out.push_back({name, m.data(), m.rows(), m.cols()});
        };
        auto add_v = [&](const std::string& name, Vec<T>& v) {
            out.push_back({name, v.data(), v.size(), 1});
        };
        add_m("e_byte", e_byte);
        add_m("e_pos", e_pos);
        add_m("f.w1", f_w1);
        add_v("f.b1", f_b1);
        add_m("f.w2", f_w2);
        add_v("f.b2", f_b2);
        for (size_t i = 0; i < layers.size(); ++i) {
            const std::string pre = "layer" + std::to_string(i) + ".";
            auto& l = layers[i];
            add_m(pre + "wq", l.wq);
            add_v(pre + "bq", l.bq);
            add_m(pre + "wk", l.wk);
            add_v(pre + "bk", l.bk);
            add_m(pre + "wv", l.wv);
            add_v(pre + "bv", l.bv);
            add_m(pre + "w1", l.w1);
            add_v(pre + "b1", l.b1);
            add_m(pre + "w2", l.w2);
            add_v(pre + "b2", l.b2);
            add_v(pre + "ln1.g", l.ln1_g);
            add_v(pre + "ln1.b", l.ln1_b);
            add_v(pre + "ln2.g", l.ln2_g);
            add_v(pre + "ln2.b", l.ln2_b);
        }
        add_m("mlm.w1", mlm_w1);
        add_v("mlm.b1", mlm_b1);
        add_m("mlm.w2", mlm_w2);
        add_v("mlm.b2", mlm_b2);
        add_m("cls.w1", cls_w1);
        add_m("cls.w2", cls_w2);
        return out;
    }

    uint64_t count_parameters() {
        uint64_t n = 0;
        for (const auto& t : tensors()) n += static_cast<uint64_t>(t.size());
        return n;
    }

    void add_scaled(ModelParameters& other, T alpha) {
        auto a = tensors();
        auto b = other.tensors();
        for (size_t i = 0; i < a.size(); ++i)
            for (Eigen::Index k = 0; k < a[i].size(); ++k) a[i].data[k] += alpha * b[i].data[k];
    }
    void set_zero() {
        for (auto& t : tensors()) std::fill(t.data, t.data + t.size(), T(0));
    }
};

struct ForwardOptions {
    bool training = false; // enables dropout draws
    double dropout = 0.0;
    uint64_t seed = 0, epoch = 0, sequence = 0; // dropout stream key
    bool check_finite = true;
};

template <class T>
struct Trace {
    bool recorded = false;
    Eigen::Index n = 0, n_real = 0;
    std::vector<uint16_t> ids;
    ForwardOptions opt;
    Mat<T> x0, f_pre, f_hidden, e1, drop_embed;
    struct Layer {
        Mat<T> x_in, q, k, v;
        std::vector<Mat<T>> probs; // per head, [n, n]
        Mat<T> attn, drop_attn, res1;
        LayerNormCache<T> ln1;
        Mat<T> u, ff_pre, ff_hidden, z, drop_ffn, res2;
        LayerNormCache<T> ln2;
    };
    std::vector<Layer> layers;
    Mat<T> e_out;
    // head caches
    std::vector<uint32_t> mlm_positions;
    Mat<T> mlm_in, mlm_pre, mlm_hidden;
    Mat<T> cls_pre, cls_tanh;
};

namespace detail {

// Inverted-dropout mask: entries are 0 or 1/(1-p). Empty matrix == identity.
template <class T>
inline Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    Mat<T> m(rows, cols);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.bernoulli(p) ? T(0) : keep_scale;
    return m;
}

template <class T>
inline void apply_mask(Mat<T>& x, const Mat<T>& mask) {
    if (mask.size()) x.array() *= mask.array();
}

template <class T>
inline void require_finite(const Mat<T>& x, const char* where) {
    if (!x.allFinite())
        throw NonFiniteActivation(std::string("non-finite values in ") + where);
}

} // namespace detail

// Runs the encoder over one sequence. `ids.size()` may be anywhere in
// [n_real, seq_len]: callers can pass fully padded rows or trim padding —
// outputs at real positions are identical either way.
template <class T>
Mat<T> encoder_forward(const ModelParameters<T>& p, const std::vector<uint16_t>& ids,
                       uint32_t n_real, const ForwardOptions& opt, Trace<T>* tr = nullptr) {
    const ModelConfig& cfg = p.cfg;
    const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
    const Eigen::Index d = cfg.d_emb, dh = cfg.head_dim();
    if (n == 0) throw EmptyInput("encoder input is empty");
    if (n > static_cast<Eigen::Index>(cfg.seq_len))
        throw PositionOverflow("input length " + std::to_string(n) + " exceeds seq_len " +
                               std::to_string(cfg.seq_len));
    if (n_real == 0 || static_cast<Eigen::Index>(n_real) > n)
        throw EmptyInput("n_real " + std::to_string(n_real) + " outside 1.." + std::to_string(n));
    for (uint16_t id : ids)
        if (id >= cfg.vocab) throw UnknownId("input token id " + std::to_string(id));

    const bool drop_on = opt.training && opt.dropout > 0.0;
    Rng drop_rng = Rng::derive(opt.seed, Stream::dropout, opt.epoch, opt.sequence);

    if (tr) {
        *tr = Trace<T>{};
        tr->recorded = true;
        tr->n = n;
        tr->n_real = n_real;
        tr->ids = ids;
        tr->opt = opt;
        tr->layers.resize(cfg.layers);
    }

    // Embedding: [byte || position] combined by the two-layer FF.
    Mat<T> x0(n, 2 * d);
    for (Eigen::Index i = 0; i < n; ++i) {
        x0.row(i).head(d) = p.e_byte.row(ids[static_cast<size_t>(i)]);
        x0.row(i).tail(d) = p.e_pos.row(i);
    }
    Mat<T> f_pre = (x0 * p.f_w1).rowwise() + p.f_b1.transpose();
    Mat<T> f_hidden = gelu(f_pre);
    Mat<T> x = (f_hidden * p.f_w2).rowwise() + p.f_b2.transpose();
    if (tr) {
        tr->x0 = x0;
        tr->f_pre = f_pre;
        tr->f_hidden = f_hidden;
        tr->e1 = x;
    }
    if (drop_on) {
        Mat<T> mask = detail::dropout_mask<T>(n, d, opt.dropout, drop_rng);
        detail::apply_mask(x, mask);
        if (tr) tr->drop_embed = std::move(mask);
    }
    if (opt.check_finite) detail::require_finite(x, "embedding combiner output");

    const T scale = T(1) / std::sqrt(static_cast<T>(cfg.scale == AttnScale::paper_d_emb
                                                        ? cfg.d_emb
                                                        : cfg.head_dim()));

    for (uint32_t li = 0; li < cfg.layers; ++li) {
        const LayerParams<T>& L = p.layers[li];
        typename Trace<T>::Layer* tl = tr ? &tr->layers[li] : nullptr;
        if (tl) tl->x_in = x;

        Mat<T> q = (x * L.wq).rowwise() + L.bq.transpose();
        Mat<T> k = (x * L.wk).rowwise() + L.bk.transpose();
        Mat<T> v = (x * L.wv).rowwise() + L.bv.transpose();
        if (tl) {
            tl->q = q;
            tl->k = k;
            tl->v = v;
            tl->probs.resize(cfg.heads);
        }

        Mat<T> attn(n, d);
        for (uint32_t h = 0; h < cfg.heads; ++h) {
            auto qh = q.middleCols(h * dh, dh);
            auto kh = k.middleCols(h * dh, dh);
            auto vh = v.middleCols(h * dh, dh);
            Mat<T> s = qh * kh.transpose() * scale;
            softmax_rows_masked(s, n_real, n_real); // pad keys excluded, pad query rows zeroed
            attn.middleCols(h * dh, dh) = s * vh;
            if (tl) tl->probs[h] = std::move(s);
        }
        if (drop_on) {
            Mat<T> mask = detail::dropout_mask<T>(n, d, opt.dropout, drop_rng);
            if (tl) {
                tl->attn = attn;
                tl->drop_attn = mask;
            }
            detail::apply_mask(attn, mask);
        } else if (tl) {
            tl->attn = attn;
        }

        Mat<T> res1 = x + attn;
        Mat<T> u = layernorm(res1, L.ln1_g, L.ln1_b, static_cast<T>(cfg.ln_eps),
                             tl ? &tl->ln1 : nullptr);
        if (tl) {
            tl->res1 = std::move(res1);
            tl->u = u;
        }

        Mat<T> ff_pre = (u * L.w1).rowwise() + L.b1.transpose();
        Mat<T> ff_hidden = gelu(ff_pre);
        Mat<T> z = (ff_hidden * L.w2).rowwise() + L.b2.transpose();
        if (tl) {
            tl->ff_pre = std::move(ff_pre);
            tl->ff_hidden = std::move(ff_hidden);
            tl->z = z;
        }
        if (drop_on) {
            Mat<T> mask = detail::dropout_mask<T>(n, d, opt.dropout, drop_rng);
            detail::apply_mask(z, mask);
            if (tl) tl->drop_ffn = std::move(mask);
        }

        Mat<T> res2 = u + z;
        x = layernorm(res2, L.ln2_g, L.ln2_b, static_cast<T>(cfg.ln_eps), tl ? &tl->ln2 : nullptr);
        if (tl) tl->res2 = std::move(res2);
        if (opt.check_finite)
            detail::require_finite(x, ("encoder layer " + std::to_string(li)).c_str());
    }
    if (tr) tr->e_out = x;
    return x;
}

// Masked-byte head, evaluated only at the corrupted positions.
template <class T>
Mat<T> mlm_forward(const ModelParameters<T>& p, const Mat<T>& e_out,
                   const std::vector<uint32_t>& positions, Trace<T>* tr = nullptr) {
    const Eigen::Index m = static_cast<Eigen::Index>(positions.size());
    Mat<T> in(m, p.cfg.d_emb);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (static_cast<Eigen::Index>(positions[static_cast<size_t>(i)]) >= e_out.rows())
            throw PositionOverflow("masked position " +
                                   std::to_string(positions[static_cast<size_t>(i)]) +
                                   " outside sequence of " + std::to_string(e_out.rows()));
        in.row(i) = e_out.row(positions[static_cast<size_t>(i)]);
    }
    Mat<T> pre = (in * p.mlm_w1).rowwise() + p.mlm_b1.transpose();
    Mat<T> hidden = gelu(pre);
    Mat<T> logits = (hidden * p.mlm_w2).rowwise() + p.mlm_b2.transpose();
    if (tr) {
        tr->mlm_positions = positions;
        tr->mlm_in = std::move(in);
        tr->mlm_pre = std::move(pre);
        tr->mlm_hidden = std::move(hidden);
    }
    return logits;
}

// Per-position classification head: logits = tanh(E W1) W2 (softmax is the
// loss's job). Pad rows are computed but carry no loss.
template <class T>
Mat<T> cls_forward(const ModelParameters<T>& p, const Mat<T>& e_out, Trace<T>* tr = nullptr) {
    Mat<T> pre = e_out * p.cls_w1;
    Mat<T> th = pre.unaryExpr([](T v) { return std::tanh(v); });
    Mat<T> logits = th * p.cls_w2;
    if (tr) {
        tr->cls_pre = std::move(pre);
        tr->cls_tanh = std::move(th);
    }
    return logits;
}

} // namespace xda
