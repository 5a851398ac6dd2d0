#pragma once

// Negative-sampling objective for the distributed-memory paragraph vector
// model. The hidden activation is the mean of the document vector and the
// context word vectors; the center word is discriminated from sampled noise
// words with a logistic loss:
//
//   L(h) = -log s(h . u_target) - sum_n log s(-h . u_n)
//
// These functions are pure; the trainer applies the returned gradients.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace scorestream::embedding_math {

/// -log(sigmoid(x)), stable for large |x|.
inline double neg_log_sigmoid(double x) {
    return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

template <class T>
double dot(std::span<const T> a, std::span<const T> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

/// Output rows in scoring order: rows[0] is the target word, the rest are noise.
template <class T>
double ns_loss(std::span<const T> hidden, std::span<const std::span<const T>> rows) {
    double loss = neg_log_sigmoid(dot(hidden, rows[0]));
    for (std::size_t j = 1; j < rows.size(); ++j) loss += neg_log_sigmoid(-dot(hidden, rows[j]));
    return loss;
}

/// Computes the loss, dL/dh into grad_hidden, and per-row coefficients g_j
/// such that dL/du_j = g_j * h.
template <class T>
double ns_loss_and_grad(std::span<const T> hidden, std::span<const std::span<const T>> rows, std::span<T> grad_hidden,
                        std::span<double> row_coeff) {
    double loss = 0.0;
    for (auto& g : grad_hidden) g = T(0);
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const double score = dot(hidden, rows[j]);
        const double label = j == 0 ? 1.0 : 0.0;
        loss += j == 0 ? neg_log_sigmoid(score) : neg_log_sigmoid(-score);
        const double g = sigmoid(score) - label;
        row_coeff[j] = g;
        for (std::size_t d = 0; d < hidden.size(); ++d) {
            grad_hidden[d] += static_cast<T>(g * static_cast<double>(rows[j][d]));
        }
    }
    return loss;
}

/// Mean of the document vector and context rows.
template <class T>
void pvdm_hidden(std::span<const T> doc, std::span<const std::span<const T>> contexts, std::span<T> hidden) {
    const double scale = 1.0 / static_cast<double>(contexts.size() + 1);
    for (std::size_t d = 0; d < doc.size(); ++d) {
        double s = doc[d];
        for (const auto& c : contexts) s += c[d];
        hidden[d] = static_cast<T>(s * scale);
    }
}

template <class T>
double pvdm_loss(std::span<const T> doc, std::span<const std::span<const T>> contexts,
                 std::span<const std::span<const T>> rows) {
    std::vector<T> hidden(doc.size());
    pvdm_hidden<T>(doc, contexts, hidden);
    return ns_loss<T>(hidden, rows);
}

/// Loss and dL/d(doc). The document vector enters the mean with weight
/// 1/(contexts+1), so its gradient is the hidden gradient scaled by that.
template <class T>
double pvdm_doc_gradient(std::span<const T> doc, std::span<const std::span<const T>> contexts,
                         std::span<const std::span<const T>> rows, std::span<T> grad_doc) {
    std::vector<T> hidden(doc.size());
    std::vector<double> coeff(rows.size());
    pvdm_hidden<T>(doc, contexts, hidden);
    const double loss = ns_loss_and_grad<T>(hidden, rows, grad_doc, coeff);
    const double scale = 1.0 / static_cast<double>(contexts.size() + 1);
    for (auto& g : grad_doc) g = static_cast<T>(g * scale);
    return loss;
}

}  // namespace scorestream::embedding_math
