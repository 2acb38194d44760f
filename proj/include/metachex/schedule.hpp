#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "metachex/common.hpp"

namespace metachex {

struct PlateauConfig {
  double factor = 0.1;       // lr multiplier on plateau
  int patience = 1;          // non-improving epochs before a reduction
  double min_delta = 1e-4;   // required drop below the best seen so far
  double min_lr = 1e-7;      // lr floor
  int stop_patience = 3;     // non-improving epochs at the floor before stopping

  void validate() const {
    require(factor > 0 && factor < 1, "plateau: factor must be in (0,1)");
    require(patience >= 1 && stop_patience >= 1, "plateau: patience must be >= 1");
    require(min_delta >= 0 && min_lr > 0, "plateau: min_delta >= 0 and min_lr > 0");
  }
};

struct PlateauStep {
  double lr = 0.0;     // lr in effect after this observation
  bool reduced = false;
  bool should_stop = false;
};

// Reduce-on-plateau over a monitored loss: an epoch "improves" only if it is
// below the best seen so far by more than min_delta. Once the lr sits at the
// floor, further plateau epochs count toward early stopping instead.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, PlateauConfig cfg = {}) : lr_(initial_lr), cfg_(cfg) {
    cfg_.validate();
    require(initial_lr > 0, "plateau: initial lr must be positive");
  }

  double lr() const { return lr_; }

  PlateauStep observe(double metric) {
    PlateauStep step;
    const bool improved = !best_ || metric < *best_ - cfg_.min_delta;
    if (improved) {
      best_ = metric;
      bad_ = 0;
      floor_bad_ = 0;
    } else if (lr_ <= cfg_.min_lr) {
      if (++floor_bad_ >= cfg_.stop_patience) step.should_stop = true;
    } else if (++bad_ >= cfg_.patience) {
      lr_ = std::max(lr_ * cfg_.factor, cfg_.min_lr);
      step.reduced = true;
      bad_ = 0;
    }
    step.lr = lr_;
    return step;
  }

 private:
  double lr_;
  PlateauConfig cfg_;
  std::optional<double> best_;
  int bad_ = 0;
  int floor_bad_ = 0;
};

// Replays a whole loss sequence through the scheduler; entries after a stop
// decision are not consumed.
inline std::vector<PlateauStep> replay_lr_schedule(const std::vector<double>& losses,
                                                   double initial_lr, PlateauConfig cfg = {}) {
  PlateauScheduler sched(initial_lr, cfg);
  std::vector<PlateauStep> trace;
  for (double loss : losses) {
    trace.push_back(sched.observe(loss));
    if (trace.back().should_stop) break;
  }
  return trace;
}

}  // namespace metachex
