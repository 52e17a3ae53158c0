#include "cflow/ood/ood.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <mutex>
#include <thread>

#include "cflow/data/images.hpp"
#include "cflow/data/vectors.hpp"

namespace cflow {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// Scores rows [begin, end) as one batch for every noise draw.
void score_batch(const FlowModel& model, const TrainingSet& data, const ScoringPolicy& policy, std::size_t begin,
                 std::size_t end, std::vector<double>& out) {
  const std::size_t d = data.data.cols();
  const std::size_t draws = data.quantized ? policy.noise_samples : 1;
  std::vector<Pcg32> streams;
  for (std::size_t i = begin; i < end; ++i) streams.emplace_back(policy.seed, i);
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  for (std::size_t k = 0; k < draws; ++k) {
    Dequantized batch;
    if (data.quantized) {
      Tensor pixels = Tensor::matrix(idx.size(), d);
      Tensor noise = Tensor::matrix(idx.size(), d);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        auto src = data.data.row(idx[r]);
        std::copy(src.begin(), src.end(), pixels.row(r).begin());
        streams[r].fill_uniform(noise.row(r));
      }
      batch = dequantize(pixels, noise, policy.alpha);
    } else {
      Pcg32 unused;
      batch = prepare_batch(data, idx, unused, policy.alpha);
    }
    const auto ll = batch_log_likelihood(model, batch, policy.bn_mode);
    for (std::size_t r = 0; r < idx.size(); ++r) out[begin + r] += ll[r] / static_cast<double>(draws);
  }
}

}  // namespace

ScoreSet score_dataset(const FlowModel& model, const TrainingSet& data, const std::string& dataset,
                       const ScoringPolicy& policy) {
  const std::size_t n = data.data.empty() ? 0 : data.data.rows();
  if (n == 0) throw InputError("dataset '" + dataset + "' is empty");
  if (data.data.cols() != model.dims())
    throw InputError("dataset '" + dataset + "' has " + std::to_string(data.data.cols()) +
                     " values per example, model expects " + std::to_string(model.dims()) + " (" +
                     model.input_shape().to_string() + ")");
  if (policy.noise_samples == 0) throw ConfigError("noise_samples must be at least 1");
  if (policy.batch_size == 0) throw ConfigError("scoring batch size must be positive");
  if (policy.bn_mode == BnMode::kTrain && n < 2)
    throw ContractViolation("train-mode scoring needs at least two examples");

  const std::size_t batches = (n + policy.batch_size - 1) / policy.batch_size;
  std::vector<std::size_t> bounds(batches + 1);
  for (std::size_t b = 0; b <= batches; ++b) bounds[b] = b * n / batches;

  ScoreSet out{dataset, std::vector<double>(n, 0.0), policy};
  const std::size_t workers = std::max<std::size_t>(1, std::min(policy.workers, batches));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t b = next++; b < batches; b = next++) {
      try {
        score_batch(model, data, policy, bounds[b], bounds[b + 1], out.logp);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

double auroc(std::span<const double> in_scores, std::span<const double> ood_scores) {
  if (in_scores.empty() || ood_scores.empty()) throw ContractViolation("auroc needs two nonempty score sets");
  struct Item {
    double score;
    bool in;
  };
  std::vector<Item> all;
  for (double s : in_scores) all.push_back({s, true});
  for (double s : ood_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  // Twice the rank sum keeps average ranks integral.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::size_t in_count = 0;
    while (j < all.size() && all[j].score == all[i].score) in_count += all[j++].in;
    twice_rank_sum += in_count * (i + 1 + j);  // average rank (i+1+j)/2
    i = j;
  }
  const std::uint64_t n_in = in_scores.size(), n_ood = ood_scores.size();
  const std::uint64_t twice_u = twice_rank_sum - n_in * (n_in + 1);
  return (static_cast<double>(twice_u) / 2.0) / (static_cast<double>(n_in) * static_cast<double>(n_ood));
}

ThresholdMetrics threshold_metrics(std::span<const double> in_scores, std::span<const double> ood_scores, double tau) {
  if (in_scores.empty() || ood_scores.empty()) throw ContractViolation("threshold metrics need two nonempty score sets");
  std::size_t tp = 0, fp = 0;
  for (double s : in_scores) tp += s >= tau;
  for (double s : ood_scores) fp += s >= tau;
  const double n_in = static_cast<double>(in_scores.size()), n_ood = static_cast<double>(ood_scores.size());
  ThresholdMetrics m;
  m.tpr = static_cast<double>(tp) / n_in;
  m.fpr = static_cast<double>(fp) / n_ood;
  m.accuracy = (static_cast<double>(tp) + (n_ood - static_cast<double>(fp))) / (n_in + n_ood);
  return m;
}

std::vector<std::pair<double, double>> roc_curve(std::span<const double> in_scores, std::span<const double> ood_scores) {
  std::vector<double> taus(in_scores.begin(), in_scores.end());
  taus.insert(taus.end(), ood_scores.begin(), ood_scores.end());
  std::sort(taus.begin(), taus.end(), std::greater<>());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  std::vector<std::pair<double, double>> curve{{0.0, 0.0}};
  for (double tau : taus) {
    const auto m = threshold_metrics(in_scores, ood_scores, tau);
    curve.emplace_back(m.fpr, m.tpr);
  }
  return curve;
}

double roc_area(const std::vector<std::pair<double, double>>& curve) {
  double area = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k)
    area += (curve[k].first - curve[k - 1].first) * (curve[k].second + curve[k - 1].second) / 2.0;
  return area;
}

Histogram histogram(std::span<const double> scores, std::size_t bins, double lo, double hi) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
    throw ConfigError("histogram range must be finite with lo < hi");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0), 0, 0};
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double s : scores) {
    if (s < lo) {
      ++h.underflow;
    } else if (s >= hi) {
      ++h.overflow;
    } else {
      auto b = static_cast<std::size_t>((s - lo) / width);
      if (b >= bins) b = bins - 1;
      // Guard against rounding placing s one bin too far right.
      if (b > 0 && s < lo + static_cast<double>(b) * width) --b;
      if (b + 1 < bins && s >= lo + static_cast<double>(b + 1) * width) ++b;
      ++h.counts[b];
    }
  }
  return h;
}

std::filesystem::path policy_sidecar_path(const std::filesystem::path& scores_path) {
  auto p = scores_path;
  p += ".policy";
  return p;
}

void write_scores_csv(const std::filesystem::path& path, const ScoreSet& scores) {
  if (scores.dataset.find_first_of(",\n") != std::string::npos)
    throw ConfigError("dataset id '" + scores.dataset + "' may not contain commas or newlines");
  std::string text = "dataset,index,logp_nats\n";
  for (std::size_t i = 0; i < scores.logp.size(); ++i)
    text += scores.dataset + "," + std::to_string(i) + "," + format_double(scores.logp[i]) + "\n";
  write_text(path, text);
  ConfigMap policy;
  policy["score.dataset"] = scores.dataset;
  policy["score.bn_mode"] = std::string(bn_mode_name(scores.policy.bn_mode));
  policy["score.seed"] = std::to_string(scores.policy.seed);
  policy["score.noise_samples"] = std::to_string(scores.policy.noise_samples);
  policy["score.batch_size"] = std::to_string(scores.policy.batch_size);
  policy["score.alpha"] = format_double(scores.policy.alpha);
  write_text(policy_sidecar_path(path), format_config_text(policy));
}

ScoreSet read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(in, line) || (line != "dataset,index,logp_nats" && line != "dataset,index,logp_nats\r"))
    throw InputError(path.string() + ": expected header 'dataset,index,logp_nats'");
  ScoreSet out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos)
      throw InputError(path.string() + ": row " + std::to_string(row) + " does not have three columns");
    const std::string dataset = line.substr(0, c1);
    if (out.logp.empty()) out.dataset = dataset;
    if (dataset != out.dataset)
      throw InputError(path.string() + ": row " + std::to_string(row) + " names dataset '" + dataset + "', expected '" +
                       out.dataset + "'");
    const std::string value = line.substr(c2 + 1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (value.empty() || ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(v))
      throw InputError(path.string() + ": row " + std::to_string(row) + ", column 3: '" + value +
                       "' is not a finite number");
    out.logp.push_back(v);
  }
  if (out.logp.empty()) throw InputError(path.string() + ": no scores");
  if (std::filesystem::exists(policy_sidecar_path(path))) {
    std::ifstream p(policy_sidecar_path(path));
    std::stringstream buf;
    buf << p.rdbuf();
    const ConfigMap map = parse_config_text(buf.str());
    ConfigReader r(map);
    r.get_string("score.dataset", out.dataset);
    out.policy.bn_mode = parse_bn_mode(r.get_string("score.bn_mode", "eval"));
    out.policy.seed = r.get_uint("score.seed", 0);
    out.policy.noise_samples = r.get_uint("score.noise_samples", 1);
    out.policy.batch_size = r.get_uint("score.batch_size", 256);
    out.policy.alpha = r.get_double("score.alpha", kDefaultLogitAlpha);
  }
  return out;
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& h) {
  std::string text = "bin_left,bin_right,count\n";
  text += "-inf," + format_double(h.lo) + "," + std::to_string(h.underflow) + "\n";
  const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    const double left = h.lo + static_cast<double>(b) * width;
    const double right = b + 1 == h.counts.size() ? h.hi : h.lo + static_cast<double>(b + 1) * width;
    text += format_double(left) + "," + format_double(right) + "," + std::to_string(h.counts[b]) + "\n";
  }
  text += format_double(h.hi) + ",inf," + std::to_string(h.overflow) + "\n";
  write_text(path, text);
}

}  // namespace cflow
