#include "agg/nn/fd_check.hpp"

#include "agg/error.hpp"

#include <algorithm>
#include <cmath>

namespace agg::nn {

namespace {

double central(Tensor& x, std::size_t i, double h, const std::function<Tensor()>& loss) {
    auto d = x.mutable_data();
    const double keep = d[i];
    d[i] = keep + h;
    const double up = loss().item();
    d[i] = keep - h;
    const double down = loss().item();
    d[i] = keep;
    return (up - down) / (2.0 * h);
}

}  // namespace

FdReport fd_check(const std::string& name, std::vector<Tensor> inputs, const std::function<Tensor()>& loss,
                  const FdOptions& o) {
    FdReport report;
    report.name = name;
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.clear_grad();
    }
    backward(loss());
    std::vector<std::vector<double>> analytic;
    for (auto& t : inputs) {
        if (t.has_grad()) {
            analytic.emplace_back(t.grad().begin(), t.grad().end());
        } else {
            analytic.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
        }
        t.clear_grad();
    }

    NoGradGuard guard;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < analytic[k].size(); ++i) {
            double h = o.step;
            double num = central(inputs[k], i, h, loss);
            for (int r = 0; r < o.max_refinements; ++r) {
                const double half = central(inputs[k], i, h / 2.0, loss);
                const double scale = std::max({std::abs(num), std::abs(half), o.magnitude_floor});
                if (std::abs(num - half) <= 1e-4 * scale) break;
                h /= 4.0;
                num = central(inputs[k], i, h, loss);
            }
            const double a = analytic[k][i];
            const double mag = std::max(std::abs(a), std::abs(num));
            if (mag <= o.magnitude_floor) continue;
            ++report.checked;
            report.max_rel_err = std::max(report.max_rel_err, std::abs(a - num) / mag);
        }
    }
    report.pass = report.max_rel_err < o.tolerance;
    return report;
}

}  // namespace agg::nn
