#pragma once

#include "agg/nn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace agg::nn {

struct FdOptions {
    double step = 1e-4;
    double tolerance = 1e-3;
    double magnitude_floor = 1e-6;
    // Retake the difference with step / 4^k while fd(h) and fd(h/2) disagree
    // (a kink inside the stencil), up to this many times.
    int max_refinements = 4;
};

struct FdReport {
    std::string name;
    double max_rel_err = 0.0;
    int checked = 0;
    bool pass = false;
};

/// Compares reverse-mode gradients of `loss()` with respect to `inputs`
/// against central differences. `loss` must rebuild the graph from the
/// current input values each call.
FdReport fd_check(const std::string& name, std::vector<Tensor> inputs, const std::function<Tensor()>& loss,
                  const FdOptions& options = {});

/// Randomized gradient checks of every differentiable operation and layer
/// at small shapes.
std::vector<FdReport> run_fd_suite(std::uint64_t seed, const FdOptions& options = {});

}  // namespace agg::nn
