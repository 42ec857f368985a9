#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "splat/math.hpp"

namespace splat {

enum class Estimator {
    kPaper,  // the biased recursion with beta_n = 1/n, canonical pixel order
    kExact,  // Welford with pairwise merge, order-independent
};

// Streaming per-channel mean/variance state. In paper mode `var` is the
// recursion's sigma-hat^2; in exact mode the variance is m2/n.
struct StreamStat {
    std::uint64_t n = 0;
    double mean = 0;
    double var = 0;
    double m2 = 0;

    void reset() { *this = StreamStat{}; }
    double variance(Estimator e) const {
        if (e == Estimator::kExact) return n > 0 ? m2 / double(n) : 0.0;
        return var;
    }
};

// mu_{n+1} = mu_n + b_{n+1}(g - mu_n); s2_{n+1} = (1 - b_n) s2_n + b_{n+1}(g - mu_n)^2,
// b_n = 1/n. The n=0 step is defined as mu_1 = g, s2_1 = 0. Throws on non-finite g.
void stream_update_paper(StreamStat& stat, double g);

// Exact single-pass update; population variance m2/n.
void stream_update_exact(StreamStat& stat, double g);

// Chan pairwise merge of two exact-mode states.
StreamStat merge_exact(const StreamStat& a, const StreamStat& b);

// Per-Gaussian accumulators for the densification criterion: the positional
// NDC gradient-norm average and the summed-channel color-gradient variance
// average, both over the views rendered since the last reset.
class GradAccum {
  public:
    GradAccum() = default;
    explicit GradAccum(std::size_t n, Estimator e = Estimator::kPaper) { resize(n, e); }

    void resize(std::size_t n, Estimator e = Estimator::kPaper);
    void reset();  // zero everything, keep size
    std::size_t size() const { return ndc_grad_norm_sum_.size(); }
    Estimator estimator() const { return estimator_; }

    // Clears the per-view finalization guard; call once per rendered view.
    void begin_view();

    void stream(std::size_t k, int channel, double g);

    // Merge an exact-mode partial into the live state; exact estimator only.
    void merge_live(std::size_t k, int channel, const StreamStat& partial);
    StreamStat& live_stat(std::size_t k, int channel) { return live_[k * 3 + channel]; }
    const StreamStat& live_stat(std::size_t k, int channel) const { return live_[k * 3 + channel]; }

    // variance_sum += sum of channel variances; ndc_grad_norm_sum += |ndc_grad|;
    // view_count += 1; live stats reset. Throws on double finalization in a view.
    void finalize_view(std::size_t k, const Vec2& ndc_grad);

    std::uint32_t view_count(std::size_t k) const { return view_count_[k]; }
    double ndc_grad_norm_sum(std::size_t k) const { return ndc_grad_norm_sum_[k]; }
    double variance_sum(std::size_t k) const { return variance_sum_[k]; }
    // Per-channel variances captured at the most recent finalize_view.
    double last_channel_var(std::size_t k, int channel) const { return last_var_[k * 3 + channel]; }

    struct Criteria {
        double gnorm = 0;   // average positional NDC gradient norm
        double dbar = 0;    // average summed-channel variance
        bool densify = false;
    };
    Criteria criteria(std::size_t k, double gamma, double tau_th) const;

    // Drop accumulators for Gaussians where keep[i] is false.
    void compact(const std::vector<char>& keep);

    // CSV: gaussian_id,gnorm,dbar,var_r,var_g,var_b
    void export_csv(const std::string& path) const;

  private:
    Estimator estimator_ = Estimator::kPaper;
    std::vector<double> ndc_grad_norm_sum_;
    std::vector<double> variance_sum_;
    std::vector<std::uint32_t> view_count_;
    std::vector<StreamStat> live_;      // 3 per Gaussian
    std::vector<double> last_var_;      // 3 per Gaussian, snapshot at finalize
    std::vector<char> finalized_;       // per-view guard
};

}  // namespace splat
