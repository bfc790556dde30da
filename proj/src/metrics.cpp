// SPDX-License-Identifier: Apache-2.0
#include "mdunet/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "mdunet/error.hpp"

namespace mdunet {
namespace {

void check_same(Shape2 a, Shape2 b, std::size_t na, std::size_t nb, const char* what) {
  if (!(a == b) || na != nb) {
    fail(ErrorKind::ShapeMismatch,
         std::string(what) + ": shape " + to_string(a) + " vs " + to_string(b));
  }
}

}  // namespace

ThresholdLadder ThresholdLadder::standard() {
  ThresholdLadder l;
  for (int i = 0; i < 10; ++i) l.taus.push_back(i / 10.0);
  return l;
}

void ThresholdLadder::validate() const {
  require(!taus.empty(), ErrorKind::InvalidArgument, "threshold ladder is empty");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    require(taus[i] >= 0.0 && taus[i] < 1.0, ErrorKind::InvalidArgument,
            "thresholds must lie in [0, 1)");
    if (i > 0) {
      require(taus[i] > taus[i - 1], ErrorKind::InvalidArgument,
              "thresholds must be strictly increasing");
    }
  }
}

Mask binarize_mask(const SoftMap& m, double tau) {
  require(tau >= 0.0 && tau < 1.0, ErrorKind::InvalidArgument, "tau must lie in [0, 1)");
  Mask out(m.shape);
  // Compared at the map's precision, so a stored 0.1f is not above tau = 0.1.
  const float t = static_cast<float>(tau);
  for (std::size_t i = 0; i < m.size(); ++i) out.data[i] = m.data[i] > t ? 1 : 0;
  return out;
}

double binary_dice(const Mask& a, const Mask& b) {
  check_same(a.shape, b.shape, a.size(), b.size(), "binary_dice");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a.data[i] != 0;
    nb += b.data[i] != 0;
    both += (a.data[i] != 0) && (b.data[i] != 0);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double staple_score(const SoftMap& pred, const SoftMap& gt, const ThresholdLadder& ladder) {
  check_same(pred.shape, gt.shape, pred.size(), gt.size(), "staple_score");
  ladder.validate();
  double acc = 0.0;
  for (double tau : ladder.taus) acc += binary_dice(binarize_mask(pred, tau), binarize_mask(gt, tau));
  return acc / static_cast<double>(ladder.taus.size());
}

EvaluationReport evaluate_dataset(const std::string& task, const std::vector<std::string>& ids,
                                  const std::vector<SoftMap>& preds,
                                  const std::vector<SoftMap>& gts,
                                  const ThresholdLadder& ladder) {
  require(preds.size() == gts.size() && ids.size() == preds.size(), ErrorKind::InvalidArgument,
          "evaluate_dataset: misaligned case lists");
  require(!preds.empty(), ErrorKind::MissingData, "evaluate_dataset: no cases");
  EvaluationReport r;
  r.task = task;
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double s = staple_score(preds[i], gts[i], ladder);
    r.cases.push_back({ids[i], s});
    acc += s;
  }
  r.mean = acc / static_cast<double>(preds.size());
  return r;
}

std::string evaluation_csv(const EvaluationReport& report) {
  std::ostringstream os;
  os << "task,case_id,score\n";
  char buf[64];
  for (const auto& c : report.cases) {
    std::snprintf(buf, sizeof buf, "%.17g", c.score);
    os << report.task << ',' << c.case_id << ',' << buf << '\n';
  }
  return os.str();
}

}  // namespace mdunet
