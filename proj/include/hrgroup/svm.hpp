#ifndef HRGROUP_SVM_HPP
#define HRGROUP_SVM_HPP

// Soft-margin kernel SVM. Binary machines are trained on the dual with a
// pairwise (SMO-type) solver using maximal-violating-pair / second-order
// working-set selection; multiclass uses one-against-one voting.

#include "hrgroup/error.hpp"
#include "hrgroup/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace hrgroup {

enum class KernelKind { Linear, Rbf };

struct KernelSpec {
    KernelKind kind = KernelKind::Rbf;
    /// Unset means 1 / (d * mean per-dimension variance of the training set).
    std::optional<double> gamma;
};

inline double kernel_value(KernelKind kind, double gamma, std::span<const double> a, std::span<const double> b) {
    if (kind == KernelKind::Linear) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
        return s;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return std::exp(-gamma * s);
}

/// 1 / (d * Var) with Var the mean over dimensions of the sample variance.
inline double default_gamma(std::span<const std::vector<double>> x) {
    if (x.empty() || x.front().empty()) return 1.0;
    const std::size_t d = x.front().size();
    const auto n = static_cast<double>(x.size());
    double var_sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (const auto& v : x) m += v[j];
        m /= n;
        double ss = 0.0;
        for (const auto& v : x) ss += (v[j] - m) * (v[j] - m);
        var_sum += x.size() > 1 ? ss / (n - 1.0) : 0.0;
    }
    const double var = var_sum / static_cast<double>(d);
    return var > 0.0 ? 1.0 / (static_cast<double>(d) * var) : 1.0;
}

struct BinarySvm {
    std::vector<std::vector<double>> support_vectors;
    std::vector<double> coef; // alpha_i * y_i
    double bias = 0.0;
    KernelKind kernel = KernelKind::Rbf;
    double gamma = 1.0;
    double C = 1.0;

    double decision(std::span<const double> x) const {
        double f = bias;
        for (std::size_t i = 0; i < support_vectors.size(); ++i)
            f += coef[i] * kernel_value(kernel, gamma, support_vectors[i], x);
        return f;
    }
};

struct SvmOptions {
    double tol = 1e-3;
    long long max_iter = 10'000'000;
};

/// Full dual solution, for diagnostics and tests.
struct BinarySolution {
    BinarySvm model;
    std::vector<double> alpha; // per training example
    double objective = 0.0;    // 0.5 a'Qa - sum(a), Q_ij = y_i y_j K_ij
    long long iterations = 0;
};

inline BinarySolution train_binary_solution(std::span<const std::vector<double>> x, std::span<const int> y,
                                            const KernelSpec& kernel, double C = 1.0, const SvmOptions& opt = {}) {
    const std::size_t n = x.size();
    if (y.size() != n) fail(ErrorCode::DimensionMismatch, "labels and examples differ in count");
    if (!(C > 0.0)) fail(ErrorCode::InvalidSpec, "C must be positive");
    bool has_pos = false, has_neg = false;
    for (int v : y) {
        if (v == 1) has_pos = true;
        else if (v == -1) has_neg = true;
        else fail(ErrorCode::InvalidSpec, "binary labels must be -1 or +1");
    }
    if (!has_pos || !has_neg) fail(ErrorCode::SingleClassInput, "binary SVM needs both classes");
    const std::size_t d = x.front().size();
    for (const auto& v : x) {
        if (v.size() != d) fail(ErrorCode::DimensionMismatch, "ragged training vectors");
        for (double f : v)
            if (!std::isfinite(f)) fail(ErrorCode::NonFiniteFeature, "non-finite training feature");
    }
    const double gamma = kernel.kind == KernelKind::Rbf ? kernel.gamma.value_or(default_gamma(x)) : 0.0;
    if (kernel.kind == KernelKind::Rbf && !(gamma > 0.0 && std::isfinite(gamma)))
        fail(ErrorCode::InvalidSpec, "gamma must be finite and positive");

    // Q_ij = y_i y_j K(x_i, x_j), dense.
    std::vector<double> q(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double v = y[i] * y[j] * kernel_value(kernel.kind, gamma, x[i], x[j]);
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    auto Q = [&](std::size_t i, std::size_t j) { return q[i * n + j]; };

    constexpr double kTau = 1e-12;
    std::vector<double> alpha(n, 0.0), grad(n, -1.0);
    auto up = [&](std::size_t t) { return y[t] == 1 ? alpha[t] < C : alpha[t] > 0.0; };
    auto low = [&](std::size_t t) { return y[t] == 1 ? alpha[t] > 0.0 : alpha[t] < C; };

    long long iter = 0;
    for (; iter < opt.max_iter; ++iter) {
        // i: maximal violator in I_up.
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t)
            if (up(t) && -y[t] * grad[t] >= gmax) {
                gmax = -y[t] * grad[t];
                i = t;
            }
        // j: second-order choice in I_low.
        double gmax2 = -std::numeric_limits<double>::infinity();
        double best_obj = std::numeric_limits<double>::infinity();
        std::size_t j = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (!low(t)) continue;
            const double yg = y[t] * grad[t];
            gmax2 = std::max(gmax2, yg);
            if (i == n) continue;
            const double diff = gmax + yg;
            if (diff > 0.0) {
                double quad = Q(i, i) + Q(t, t) - 2.0 * y[i] * y[t] * Q(i, t);
                if (quad <= 0.0) quad = kTau;
                const double obj = -(diff * diff) / quad;
                if (obj <= best_obj) {
                    best_obj = obj;
                    j = t;
                }
            }
        }
        if (i == n || j == n || gmax + gmax2 < opt.tol) break;

        const double ai = alpha[i], aj = alpha[j];
        if (y[i] != y[j]) {
            double quad = Q(i, i) + Q(j, j) + 2.0 * Q(i, j);
            if (quad <= 0.0) quad = kTau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if (diff > 0.0) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = C - diff;
                }
            } else if (alpha[j] > C) {
                alpha[j] = C;
                alpha[i] = C + diff;
            }
        } else {
            double quad = Q(i, i) + Q(j, j) - 2.0 * Q(i, j);
            if (quad <= 0.0) quad = kTau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = sum - C;
                }
            } else if (alpha[j] < 0.0) {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if (sum > C) {
                if (alpha[j] > C) {
                    alpha[j] = C;
                    alpha[i] = sum - C;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        const double dai = alpha[i] - ai, daj = alpha[j] - aj;
        for (std::size_t t = 0; t < n; ++t) grad[t] += Q(t, i) * dai + Q(t, j) * daj;
    }

    // Offset: average y*G over free variables, else midpoint of the bounds.
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, free_sum = 0.0;
    int n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * grad[t];
        if (alpha[t] >= C) {
            if (y[t] == -1) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (alpha[t] <= 0.0) {
            if (y[t] == 1) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            free_sum += yg;
        }
    }
    const double rho = n_free > 0 ? free_sum / n_free : 0.5 * (ub + lb);

    BinarySolution sol;
    sol.alpha = alpha;
    sol.iterations = iter;
    // grad = Qa - e, so (Qa)_t = grad_t + 1.
    for (std::size_t t = 0; t < n; ++t) sol.objective += 0.5 * alpha[t] * (grad[t] + 1.0) - alpha[t];

    sol.model.kernel = kernel.kind;
    sol.model.gamma = gamma;
    sol.model.C = C;
    sol.model.bias = -rho;
    for (std::size_t t = 0; t < n; ++t)
        if (alpha[t] > 0.0) {
            sol.model.support_vectors.push_back(x[t]);
            sol.model.coef.push_back(alpha[t] * y[t]);
        }
    return sol;
}

inline BinarySvm train_binary(std::span<const std::vector<double>> x, std::span<const int> y,
                              const KernelSpec& kernel, double C = 1.0, const SvmOptions& opt = {}) {
    return train_binary_solution(x, y, kernel, C, opt).model;
}

// ---------------------------------------------------------------------------
// One-against-one

struct OvoSvm {
    std::vector<int> classes;       // sorted class ids
    std::vector<BinarySvm> machines; // pairs (a, b), a < b, lexicographic; +1 means classes[a]
    std::size_t input_dim = 0;
    std::uint64_t seed = 0;
    double tol = 1e-3;
};

inline std::size_t ovo_machine_count(std::size_t k) { return k * (k - 1) / 2; }

/// Trains k(k-1)/2 machines; gamma is resolved once from the full training
/// set and shared by every machine.
inline OvoSvm train_ovo(std::span<const std::vector<double>> x, std::span<const int> labels, KernelSpec kernel,
                        double C = 1.0, const SvmOptions& opt = {}, std::uint64_t seed = 0) {
    if (x.empty()) fail(ErrorCode::EmptyDataset, "no training examples");
    if (labels.size() != x.size()) fail(ErrorCode::DimensionMismatch, "labels and examples differ in count");
    OvoSvm model;
    model.seed = seed;
    model.tol = opt.tol;
    model.input_dim = x.front().size();
    model.classes.assign(labels.begin(), labels.end());
    std::sort(model.classes.begin(), model.classes.end());
    model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
    if (kernel.kind == KernelKind::Rbf && !kernel.gamma) kernel.gamma = default_gamma(x);

    const std::size_t k = model.classes.size();
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) {
            std::vector<std::vector<double>> xs;
            std::vector<int> ys;
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (labels[i] == model.classes[a]) {
                    xs.push_back(x[i]);
                    ys.push_back(1);
                } else if (labels[i] == model.classes[b]) {
                    xs.push_back(x[i]);
                    ys.push_back(-1);
                }
            }
            model.machines.push_back(train_binary(xs, ys, kernel, C, opt));
        }
    return model;
}

/// Vote aggregation. decisions[m] belongs to machine m in lexicographic pair
/// order; positive favours the first class of the pair. Ties on votes go to
/// the larger sum of signed decision values, then to the lowest class.
inline int ovo_vote(std::span<const int> classes, std::span<const double> decisions) {
    const std::size_t k = classes.size();
    if (k == 0) fail(ErrorCode::InvariantViolation, "model has no classes");
    if (decisions.size() != ovo_machine_count(k)) fail(ErrorCode::InvariantViolation, "machine count mismatch");
    std::vector<int> votes(k, 0);
    std::vector<double> sums(k, 0.0);
    std::size_t m = 0;
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b, ++m) {
            const double d = decisions[m];
            ++votes[d > 0.0 ? a : b];
            sums[a] += d;
            sums[b] -= d;
        }
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
        if (votes[c] > votes[best] || (votes[c] == votes[best] && sums[c] > sums[best])) best = c;
    return classes[best];
}

inline int predict_ovo(const OvoSvm& model, std::span<const double> x) {
    if (x.size() != model.input_dim)
        fail(ErrorCode::DimensionMismatch,
             "input dim " + std::to_string(x.size()) + " vs model dim " + std::to_string(model.input_dim));
    std::vector<double> decisions;
    decisions.reserve(model.machines.size());
    for (const auto& m : model.machines) decisions.push_back(m.decision(x));
    return ovo_vote(model.classes, decisions);
}

// ---------------------------------------------------------------------------
// Serialization: line-oriented text with hexadecimal floats (bit exact).

inline constexpr std::string_view kSvmFormatTag = "hrgroup-svm";
inline constexpr int kSvmFormatVersion = 1;

inline std::string serialize_svm(const OvoSvm& model) {
    std::ostringstream out;
    out << kSvmFormatTag << ' ' << kSvmFormatVersion << '\n';
    out << "input_dim " << model.input_dim << '\n';
    out << "seed " << model.seed << '\n';
    out << "tol " << io::hexfloat(model.tol) << '\n';
    out << "classes " << model.classes.size();
    for (int c : model.classes) out << ' ' << c;
    out << '\n';
    out << "machines " << model.machines.size() << '\n';
    for (const auto& m : model.machines) {
        out << "machine " << (m.kernel == KernelKind::Linear ? "linear" : "rbf") << ' ' << io::hexfloat(m.gamma)
            << ' ' << io::hexfloat(m.C) << ' ' << io::hexfloat(m.bias) << ' ' << m.support_vectors.size() << '\n';
        for (std::size_t i = 0; i < m.support_vectors.size(); ++i) {
            out << io::hexfloat(m.coef[i]);
            for (double v : m.support_vectors[i]) out << ' ' << io::hexfloat(v);
            out << '\n';
        }
    }
    return out.str();
}

inline OvoSvm deserialize_svm(std::string_view text) {
    std::istringstream in{std::string(text)};
    auto expect = [&](std::string_view word) {
        std::string w;
        if (!(in >> w) || w != word) fail(ErrorCode::MalformedInput, "svm model: expected '" + std::string(word) + "'");
    };
    auto next_hex = [&]() {
        std::string w;
        if (!(in >> w)) fail(ErrorCode::MalformedInput, "svm model: truncated");
        return io::parse_hexfloat(w);
    };
    expect(kSvmFormatTag);
    int version = 0;
    if (!(in >> version) || version != kSvmFormatVersion)
        fail(ErrorCode::MalformedInput, "svm model: unsupported version");
    OvoSvm model;
    expect("input_dim");
    in >> model.input_dim;
    expect("seed");
    in >> model.seed;
    expect("tol");
    model.tol = next_hex();
    expect("classes");
    std::size_t k = 0;
    in >> k;
    model.classes.resize(k);
    for (auto& c : model.classes) in >> c;
    expect("machines");
    std::size_t n_machines = 0;
    in >> n_machines;
    if (!in || n_machines != ovo_machine_count(k)) fail(ErrorCode::MalformedInput, "svm model: machine count");
    for (std::size_t m = 0; m < n_machines; ++m) {
        expect("machine");
        BinarySvm b;
        std::string kind;
        in >> kind;
        if (kind == "linear") b.kernel = KernelKind::Linear;
        else if (kind == "rbf") b.kernel = KernelKind::Rbf;
        else fail(ErrorCode::MalformedInput, "svm model: kernel '" + kind + "'");
        b.gamma = next_hex();
        b.C = next_hex();
        b.bias = next_hex();
        std::size_t n_sv = 0;
        in >> n_sv;
        for (std::size_t i = 0; i < n_sv; ++i) {
            b.coef.push_back(next_hex());
            std::vector<double> sv(model.input_dim);
            for (auto& v : sv) v = next_hex();
            b.support_vectors.push_back(std::move(sv));
        }
        model.machines.push_back(std::move(b));
    }
    if (!in) fail(ErrorCode::MalformedInput, "svm model: truncated");
    return model;
}

} // namespace hrgroup

#endif
