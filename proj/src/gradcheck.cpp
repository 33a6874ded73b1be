#include "tdc/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace tdc {

GradCheckReport finite_difference_check(const std::function<Var(Tape&)>& build_loss,
                                        const std::vector<Parameter*>& params,
                                        double step) {
  const auto eval = [&]() {
    Tape tape;
    Var loss = build_loss(tape);
    if (loss->value.numel() != 1) throw std::invalid_argument("gradcheck: loss must be scalar");
    return loss->value[0];
  };

  // analytic gradients
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = build_loss(tape);
    tape.backward(loss);
  }

  GradCheckReport report;
  for (Parameter* p : params) {
    for (int i = 0; i < p->numel(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double up = eval();
      p->value[i] = saved - step;
      const double down = eval();
      p->value[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      const double denom = std::max({1.0, std::fabs(fd), std::fabs(analytic)});
      const double rel = std::fabs(fd - analytic) / denom;
      ++report.components;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace tdc
