#pragma once
// Reverse-mode differentiation of the encoder and both heads, written
// against the forward trace. Gradients are *accumulated* into a
// ModelParameters-shaped buffer so callers control averaging across
// sequences. Every step mirrors one forward step in reverse; the
// finite-difference gradient check in the acceptance suite pins this file
// to the forward pass elementwise.

#include <vector>

#include "xda/errors.hpp"
#include "xda/model.hpp"
#include "xda/tensor.hpp"

namespace xda {

namespace detail {

template <class T>
inline void check_recorded(const Trace<T>& tr) {
    if (!tr.recorded)
        throw GraphNotRecorded("backward called without a recorded forward trace");
}

} // namespace detail

// Backprop from d(loss)/d(encoder output) through all layers and the
// embedding combiner into parameter gradients.
template <class T>
void encoder_backward(const ModelParameters<T>& p, const Trace<T>& tr, Mat<T> dx,
                      ModelParameters<T>& g) {
    detail::check_recorded(tr);
    const ModelConfig& cfg = p.cfg;
    const Eigen::Index n = tr.n, d = cfg.d_emb, dh = cfg.head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(cfg.scale == AttnScale::paper_d_emb
                                                        ? cfg.d_emb
                                                        : cfg.head_dim()));

    for (int li = static_cast<int>(cfg.layers) - 1; li >= 0; --li) {
        const LayerParams<T>& L = p.layers[static_cast<size_t>(li)];
        LayerParams<T>& G = g.layers[static_cast<size_t>(li)];
        const auto& t = tr.layers[static_cast<size_t>(li)];

        // x_out = LN2(u + dropout(z))
        Mat<T> d_res2 = layernorm_backward(dx, t.ln2, L.ln2_g, G.ln2_g, G.ln2_b);
        Mat<T> du = d_res2;
        Mat<T> dz = d_res2;
        detail::apply_mask(dz, t.drop_ffn);

        // z = gelu(u w1 + b1) w2 + b2
        G.w2.noalias() += t.ff_hidden.transpose() * dz;
        G.b2 += dz.colwise().sum().transpose();
        Mat<T> d_hidden = dz * L.w2.transpose();
        Mat<T> d_ff_pre = (d_hidden.array() * gelu_grad(t.ff_pre).array()).matrix();
        G.w1.noalias() += t.u.transpose() * d_ff_pre;
        G.b1 += d_ff_pre.colwise().sum().transpose();
        du.noalias() += d_ff_pre * L.w1.transpose();

        // u = LN1(x_in + dropout(attn))
        Mat<T> d_res1 = layernorm_backward(du, t.ln1, L.ln1_g, G.ln1_g, G.ln1_b);
        Mat<T> dx_in = d_res1;
        Mat<T> d_attn = d_res1;
        detail::apply_mask(d_attn, t.drop_attn);

        // attention heads
        Mat<T> dq = Mat<T>::Zero(n, d), dk = Mat<T>::Zero(n, d), dv = Mat<T>::Zero(n, d);
        for (uint32_t h = 0; h < cfg.heads; ++h) {
            auto qh = t.q.middleCols(h * dh, dh);
            auto kh = t.k.middleCols(h * dh, dh);
            auto vh = t.v.middleCols(h * dh, dh);
            const Mat<T>& probs = t.probs[h];
            auto d_ch = d_attn.middleCols(h * dh, dh);

            dv.middleCols(h * dh, dh).noalias() += probs.transpose() * d_ch;
            Mat<T> dp = d_ch * vh.transpose(); // [n, n]

            // softmax rows: ds = p .* (dp - rowdot(dp, p)); zero rows stay zero
            Mat<T> ds(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (i >= tr.n_real) {
                    ds.row(i).setZero();
                    continue;
                }
                const T dot = dp.row(i).cwiseProduct(probs.row(i)).sum();
                ds.row(i) = (probs.row(i).array() * (dp.row(i).array() - dot)).matrix();
            }
            dq.middleCols(h * dh, dh).noalias() += ds * kh * scale;
            dk.middleCols(h * dh, dh).noalias() += ds.transpose() * qh * scale;
        }

        // q = x wq + bq (likewise k, v)
        G.wq.noalias() += t.x_in.transpose() * dq;
        G.bq += dq.colwise().sum().transpose();
        G.wk.noalias() += t.x_in.transpose() * dk;
        G.bk += dk.colwise().sum().transpose();
        G.wv.noalias() += t.x_in.transpose() * dv;
        G.bv += dv.colwise().sum().transpose();
        dx_in.noalias() += dq * L.wq.transpose();
        dx_in.noalias() += dk * L.wk.transpose();
        dx_in.noalias() += dv * L.wv.transpose();

        dx = std::move(dx_in);
    }

    // embedding combiner: e1 = gelu(x0 f_w1 + f_b1) f_w2 + f_b2, then dropout
    detail::apply_mask(dx, tr.drop_embed);
    g.f_w2.noalias() += tr.f_hidden.transpose() * dx;
    g.f_b2 += dx.colwise().sum().transpose();
    Mat<T> d_fh = dx * p.f_w2.transpose();
    Mat<T> d_fp = (d_fh.array() * gelu_grad(tr.f_pre).array()).matrix();
    g.f_w1.noalias() += tr.x0.transpose() * d_fp;
    g.f_b1 += d_fp.colwise().sum().transpose();
    Mat<T> dx0 = d_fp * p.f_w1.transpose();

    for (Eigen::Index i = 0; i < n; ++i) {
        g.e_byte.row(tr.ids[static_cast<size_t>(i)]) += dx0.row(i).head(d);
        g.e_pos.row(i) += dx0.row(i).tail(d);
    }
}

// Masked-byte head backward. `dlogits` is d(loss)/d(head logits), one row
// per masked position.
template <class T>
void mlm_backward(const ModelParameters<T>& p, const Trace<T>& tr, const Mat<T>& dlogits,
                  ModelParameters<T>& g) {
    detail::check_recorded(tr);
    if (dlogits.rows() != tr.mlm_in.rows())
        throw ShapeMismatch("mlm dlogits rows " + std::to_string(dlogits.rows()) +
                            " vs recorded positions " + std::to_string(tr.mlm_in.rows()));
    g.mlm_w2.noalias() += tr.mlm_hidden.transpose() * dlogits;
    g.mlm_b2 += dlogits.colwise().sum().transpose();
    Mat<T> d_hidden = dlogits * p.mlm_w2.transpose();
    Mat<T> d_pre = (d_hidden.array() * gelu_grad(tr.mlm_pre).array()).matrix();
    g.mlm_w1.noalias() += tr.mlm_in.transpose() * d_pre;
    g.mlm_b1 += d_pre.colwise().sum().transpose();
    Mat<T> d_in = d_pre * p.mlm_w1.transpose();

    Mat<T> de = Mat<T>::Zero(tr.n, p.cfg.d_emb);
    for (Eigen::Index i = 0; i < d_in.rows(); ++i)
        de.row(tr.mlm_positions[static_cast<size_t>(i)]) += d_in.row(i);
    encoder_backward(p, tr, std::move(de), g);
}

// Classification head backward. Rows of `dlogits` for unlabeled or pad
// positions must be zero (the loss builds them that way).
template <class T>
void cls_backward(const ModelParameters<T>& p, const Trace<T>& tr, const Mat<T>& dlogits,
                  ModelParameters<T>& g) {
    detail::check_recorded(tr);
    if (dlogits.rows() != tr.cls_tanh.rows())
        throw ShapeMismatch("cls dlogits rows " + std::to_string(dlogits.rows()) +
                            " vs encoder rows " + std::to_string(tr.cls_tanh.rows()));
    g.cls_w2.noalias() += tr.cls_tanh.transpose() * dlogits;
    Mat<T> d_th = dlogits * p.cls_w2.transpose();
    Mat<T> d_pre = (d_th.array() * (T(1) - tr.cls_tanh.array().square())).matrix();
    g.cls_w1.noalias() += tr.e_out.transpose() * d_pre;
    Mat<T> de = d_pre * p.cls_w1.transpose();
    encoder_backward(p, tr, std::move(de), g);
}

} // namespace xda
