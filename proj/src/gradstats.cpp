#include "splat/gradstats.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace splat {

void stream_update_paper(StreamStat& stat, double g) {
    if (!std::isfinite(g)) throw std::invalid_argument("stream_update_paper: non-finite value");
    if (stat.n == 0) {
        stat.n = 1;
        stat.mean = g;
        stat.var = 0;
        return;
    }
    double n = double(stat.n);
    double beta_n = 1.0 / n;
    double beta_n1 = 1.0 / (n + 1.0);
    double delta = g - stat.mean;
    stat.var = (1.0 - beta_n) * stat.var + beta_n1 * delta * delta;
    stat.mean += beta_n1 * delta;
    stat.n += 1;
}

void stream_update_exact(StreamStat& stat, double g) {
    stat.n += 1;
    double delta = g - stat.mean;
    stat.mean += delta / double(stat.n);
    stat.m2 += delta * (g - stat.mean);
}

StreamStat merge_exact(const StreamStat& a, const StreamStat& b) {
    if (a.n == 0) return b;
    if (b.n == 0) return a;
    StreamStat r;
    r.n = a.n + b.n;
    double delta = b.mean - a.mean;
    double na = double(a.n), nb = double(b.n), n = double(r.n);
    r.mean = a.mean + delta * nb / n;
    r.m2 = a.m2 + b.m2 + delta * delta * na * nb / n;
    return r;
}

void GradAccum::resize(std::size_t n, Estimator e) {
    estimator_ = e;
    ndc_grad_norm_sum_.assign(n, 0.0);
    variance_sum_.assign(n, 0.0);
    view_count_.assign(n, 0);
    live_.assign(n * 3, StreamStat{});
    last_var_.assign(n * 3, 0.0);
    finalized_.assign(n, 0);
}

void GradAccum::reset() { resize(size(), estimator_); }

void GradAccum::begin_view() { finalized_.assign(size(), 0); }

void GradAccum::stream(std::size_t k, int channel, double g) {
    StreamStat& s = live_[k * 3 + channel];
    if (estimator_ == Estimator::kExact)
        stream_update_exact(s, g);
    else
        stream_update_paper(s, g);
}

void GradAccum::merge_live(std::size_t k, int channel, const StreamStat& partial) {
    if (estimator_ != Estimator::kExact)
        throw std::logic_error("merge_live requires the exact estimator");
    StreamStat& s = live_[k * 3 + channel];
    s = merge_exact(s, partial);
}

void GradAccum::finalize_view(std::size_t k, const Vec2& ndc_grad) {
    if (finalized_[k]) throw std::logic_error("finalize_view: double finalization");
    finalized_[k] = 1;
    double vs = 0;
    for (int c = 0; c < 3; ++c) {
        double v = live_[k * 3 + c].variance(estimator_);
        last_var_[k * 3 + c] = v;
        vs += v;
        live_[k * 3 + c].reset();
    }
    variance_sum_[k] += vs;
    ndc_grad_norm_sum_[k] += ndc_grad.norm();
    view_count_[k] += 1;
}

GradAccum::Criteria GradAccum::criteria(std::size_t k, double gamma, double tau_th) const {
    Criteria c;
    if (view_count_[k] == 0) return c;
    double m = double(view_count_[k]);
    c.gnorm = ndc_grad_norm_sum_[k] / m;
    c.dbar = variance_sum_[k] / m;
    c.densify = gamma * c.dbar + c.gnorm > tau_th;
    return c;
}

void GradAccum::compact(const std::vector<char>& keep) {
    std::size_t w = 0;
    for (std::size_t i = 0; i < size(); ++i) {
        if (!keep[i]) continue;
        ndc_grad_norm_sum_[w] = ndc_grad_norm_sum_[i];
        variance_sum_[w] = variance_sum_[i];
        view_count_[w] = view_count_[i];
        for (int c = 0; c < 3; ++c) {
            live_[w * 3 + c] = live_[i * 3 + c];
            last_var_[w * 3 + c] = last_var_[i * 3 + c];
        }
        ++w;
    }
    ndc_grad_norm_sum_.resize(w);
    variance_sum_.resize(w);
    view_count_.resize(w);
    live_.resize(w * 3);
    last_var_.resize(w * 3);
    finalized_.assign(w, 0);
}

void GradAccum::export_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_csv: cannot open " + path);
    out << "gaussian_id,gnorm,dbar,var_r,var_g,var_b\n";
    out.precision(17);
    for (std::size_t k = 0; k < size(); ++k) {
        Criteria c = criteria(k, 0.0, 0.0);
        out << k << ',' << c.gnorm << ',' << c.dbar;
        for (int ch = 0; ch < 3; ++ch) out << ',' << last_var_[k * 3 + ch];
        out << '\n';
    }
}

}  // namespace splat
