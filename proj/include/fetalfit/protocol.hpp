#pragma once

#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

namespace fetalfit {

/// One acquisition: diffusion weighting b (s/mm^2) paired with echo time te (ms).
struct Sample {
    double b;
    double te;
};

/// The paired (b, te) sample table that defines every acquisition.
/// Joint T2 + diffusion fitting needs variation in both dimensions.
struct AcquisitionProtocol {
    std::vector<Sample> samples;
    double field_strength = 1.5;  // tesla, informational

    std::size_t size() const { return samples.size(); }

    std::size_t distinct_b() const {
        std::set<double> s;
        for (const auto& x : samples) s.insert(x.b);
        return s.size();
    }

    std::size_t distinct_te() const {
        std::set<double> s;
        for (const auto& x : samples) s.insert(x.te);
        return s.size();
    }

    bool has_b0() const {
        for (const auto& x : samples)
            if (x.b == 0.0) return true;
        return false;
    }

    void validate() const {
        if (samples.size() < 4)
            throw std::invalid_argument("protocol: needs at least 4 samples");
        for (const auto& s : samples) {
            if (!std::isfinite(s.b) || !std::isfinite(s.te))
                throw std::invalid_argument("protocol: non-finite sample");
            if (s.b < 0.0) throw std::invalid_argument("protocol: b must be >= 0");
            if (s.te <= 0.0) throw std::invalid_argument("protocol: te must be > 0");
        }
        if (distinct_b() < 2)
            throw std::invalid_argument("protocol: needs at least 2 distinct b values");
        if (distinct_te() < 2)
            throw std::invalid_argument("protocol: needs at least 2 distinct te values");
        if (!has_b0())
            throw std::invalid_argument("protocol: needs at least one b=0 sample");
    }

    /// Index of the sample with b == min(b) at the lowest te, i.e. the frame
    /// used as the raw-scan texture input.
    std::size_t b0_lowest_te_index() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < samples.size(); ++i) {
            const Sample& a = samples[i];
            const Sample& c = samples[best];
            if (a.b < c.b || (a.b == c.b && a.te < c.te)) best = i;
        }
        return best;
    }

    /// Full grid of b in {0,50,100,200,400,600} s/mm^2 x te in {96,120,156,192} ms,
    /// 24 samples, te-major order. The study's exact pair list is not public;
    /// this grid is a configurable stand-in.
    static AcquisitionProtocol default_protocol() {
        AcquisitionProtocol p;
        const double bs[] = {0.0, 50.0, 100.0, 200.0, 400.0, 600.0};
        const double tes[] = {96.0, 120.0, 156.0, 192.0};
        for (double te : tes)
            for (double b : bs) p.samples.push_back({b, te});
        return p;
    }
};

}  // namespace fetalfit
