#include "lesionforge/classifier.hpp"

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "lesionforge/error.hpp"
#include "lesionforge/feature_map.hpp"
#include "lesionforge/metrics.hpp"

namespace lesionforge {

void ClassifierArch::validate() const {
  if (input_height < 32 || input_width < 32) {
    throw DataError("classifier arch: input resolution must be >= 32x32");
  }
  if (base_channels < 1) throw DataError("classifier arch: base channels must be >= 1");
  if (pooling != "avg" && pooling != "max" && pooling != "lse") {
    throw DataError("classifier arch: unknown pooling");
  }
  if (resize_policy != "pad" && resize_policy != "stretch") {
    throw DataError("classifier arch: unknown resize policy");
  }
  if (input_filter != "none" && input_filter != "highpass") {
    throw DataError("classifier arch: unknown input filter");
  }
}

namespace {

// Two-pass separable box blur with edge clamping.
ImageF box_blur(const ImageF& img, int radius) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  ImageF tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      for (int k = -radius; k <= radius; ++k) sum += img(y, std::clamp(x + k, 0, w - 1));
      tmp(y, x) = static_cast<float>(sum / (2 * radius + 1));
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      for (int k = -radius; k <= radius; ++k) sum += tmp(std::clamp(y + k, 0, h - 1), x);
      out(y, x) = static_cast<float>(sum / (2 * radius + 1));
    }
  }
  return out;
}

ImageF highpass_stem(const ImageF& img) {
  // Band-pass: a light blur removes pixel grain (and the texture gap between
  // empirical and synthesized content) before the wide-blur subtraction
  // removes slow anatomy-scale intensity structure.
  const int wide = std::max(2, static_cast<int>(std::min(img.rows(), img.cols())) / 8);
  const ImageF fine = box_blur(img, 1);
  const ImageF coarse = box_blur(img, wide);
  return ((fine - coarse) * 1.5f + 0.5f).cwiseMax(0.0f).cwiseMin(1.0f);
}

}  // namespace

namespace {

ImageF apply_resize_policy(const ClassifierArch& arch, const ImageF& img) {
  ImageF resized = img;
  if (img.rows() != arch.input_height || img.cols() != arch.input_width) {
    resized = arch.resize_policy == "stretch"
                  ? resize_bilinear(img, arch.input_height, arch.input_width)
                  : resize_letterbox(img, arch.input_height, arch.input_width, 0.0f);
  }
  if (arch.input_filter == "highpass") resized = highpass_stem(resized);
  return resized;
}

}  // namespace

ImageF Classifier::prepare(const ImageF& image) const { return apply_resize_policy(arch(), image); }

double Classifier::score(const ImageF& image) const {
  const ImageF prepared = prepare(image);
  const float logit = net_.logit(image_to_mat<float>(prepared), false);
  return 1.0 / (1.0 + std::exp(-static_cast<double>(logit)));
}

std::vector<double> Classifier::score_batch(const std::vector<ImageF>& images) const {
  std::vector<double> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(score(img));
  return out;
}

// --- checkpoint io -----------------------------------------------------------

namespace {

using json = nlohmann::json;
constexpr char kMagic[8] = {'L', 'F', 'C', 'L', 'A', 'S', 'S', '1'};

}  // namespace

void Classifier::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  json header;
  header["arch"] = {{"input_height", arch().input_height},
                    {"input_width", arch().input_width},
                    {"base_channels", arch().base_channels},
                    {"pooling", arch().pooling},
                    {"resize_policy", arch().resize_policy},
                    {"input_filter", arch().input_filter}};
  header["seed"] = net_.init_seed();
  header["id"] = id_;
  json hist = json::array();
  for (const auto& h : history) {
    hist.push_back({{"train_loss", h.train_loss}, {"val_auc", h.val_auc}, {"lr", h.lr}});
  }
  header["history"] = hist;
  auto params = net_.params();
  json plist = json::array();
  for (const auto* p : params) {
    plist.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  header["params"] = plist;
  const std::string htext = header.dump();
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto* p : params) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  }
  if (!out) throw DataError("short checkpoint write: " + path.string());
}

Classifier Classifier::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw DataError("not a classifier checkpoint: " + path.string());
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw DataError("truncated checkpoint header: " + path.string());
  const json header = json::parse(htext);

  ClassifierArch arch;
  arch.input_height = header.at("arch").at("input_height").get<int>();
  arch.input_width = header.at("arch").at("input_width").get<int>();
  arch.base_channels = header.at("arch").at("base_channels").get<int>();
  arch.pooling = header.at("arch").at("pooling").get<std::string>();
  arch.resize_policy = header.at("arch").at("resize_policy").get<std::string>();
  if (header.at("arch").contains("input_filter")) {
    arch.input_filter = header.at("arch").at("input_filter").get<std::string>();
  }

  Classifier c(arch, header.at("seed").get<std::uint64_t>());
  c.set_id(header.at("id").get<std::string>());
  for (const auto& h : header.at("history")) {
    c.history.push_back(
        {h.at("train_loss").get<double>(), h.at("val_auc").get<double>(), h.at("lr").get<double>()});
  }
  auto params = c.net().params();
  const auto& plist = header.at("params");
  if (plist.size() != params.size()) throw DataError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto rows = plist[i].at("rows").get<Eigen::Index>();
    const auto cols = plist[i].at("cols").get<Eigen::Index>();
    if (rows != params[i]->value.rows() || cols != params[i]->value.cols()) {
      throw DataError("checkpoint parameter shape mismatch at " + params[i]->name);
    }
    in.read(reinterpret_cast<char*>(params[i]->value.data()),
            static_cast<std::streamsize>(rows * cols * sizeof(float)));
  }
  if (!in) throw DataError("truncated checkpoint data: " + path.string());
  return c;
}

// --- training ----------------------------------------------------------------

namespace {

ImageF augment(const ImageF& img, const ClassifierTrainConfig& cfg, Rng& rng) {
  const bool flip = cfg.aug_flip && rng.bernoulli(0.5);
  const bool vflip = cfg.aug_flip && rng.bernoulli(0.5);
  const double angle =
      cfg.aug_rotate ? rng.uniform(-cfg.aug_rotate_max_deg, cfg.aug_rotate_max_deg) * M_PI / 180.0 : 0.0;
  const double dy =
      cfg.aug_translate ? rng.uniform(-cfg.aug_translate_max_frac, cfg.aug_translate_max_frac) *
                              static_cast<double>(img.rows())
                        : 0.0;
  const double dx =
      cfg.aug_translate ? rng.uniform(-cfg.aug_translate_max_frac, cfg.aug_translate_max_frac) *
                              static_cast<double>(img.cols())
                        : 0.0;
  if (!flip && !vflip && angle == 0.0 && dy == 0.0 && dx == 0.0) return img;
  return warp_affine(img, angle, dy, dx, flip, vflip);
}

}  // namespace

Classifier train_classifier(const std::vector<LabeledImage>& train,
                            const std::vector<LabeledImage>& val, const ClassifierArch& arch,
                            const ClassifierTrainConfig& cfg) {
  std::int64_t n_pos = 0, n_neg = 0;
  for (const auto& t : train) (t.label ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("train_classifier: training set must contain both classes");
  }
  if (val.empty()) throw DataError("train_classifier: validation set is empty");

  Classifier model(arch, derive_seed(cfg.seed, "classifier-init"));
  if (cfg.max_epochs == 0) return model;

  const double n_total = static_cast<double>(train.size());
  const double w_pos = n_total / (2.0 * static_cast<double>(n_pos));
  const double w_neg = n_total / (2.0 * static_cast<double>(n_neg));

  auto params = model.net().trainable_params(cfg.freeze_prefix_blocks);
  nn::Adam<float> adam(params, cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay);

  Rng rng(derive_seed(cfg.seed, "classifier-train"));
  const bool any_aug = cfg.aug_flip || cfg.aug_rotate || cfg.aug_translate;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<std::size_t> pos_pool, neg_pool;
  for (std::size_t i = 0; i < train.size(); ++i) {
    (train[i].label ? pos_pool : neg_pool).push_back(i);
  }
  std::size_t pos_cursor = 0;

  // One epoch's sample sequence with per-sample loss weights.
  struct PlannedSample {
    std::size_t index;
    double weight;
  };
  auto plan_epoch = [&] {
    std::vector<PlannedSample> plan;
    if (!cfg.balanced_batches) {
      rng.shuffle(order.begin(), order.end());
      plan.reserve(order.size());
      for (std::size_t i : order) plan.push_back({i, train[i].label ? w_pos : w_neg});
      return plan;
    }
    // Balanced: walk the negatives once, interleaving recycled positives so
    // every batch is half-and-half; weights stay 1.
    rng.shuffle(neg_pool.begin(), neg_pool.end());
    const std::size_t half = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.batch) / 2);
    plan.reserve(2 * neg_pool.size());
    for (std::size_t start = 0; start < neg_pool.size(); start += half) {
      const std::size_t end = std::min(neg_pool.size(), start + half);
      for (std::size_t i = start; i < end; ++i) plan.push_back({neg_pool[i], 1.0});
      for (std::size_t i = start; i < end; ++i) {
        if (pos_cursor == 0) rng.shuffle(pos_pool.begin(), pos_pool.end());
        plan.push_back({pos_pool[pos_cursor], 1.0});
        pos_cursor = (pos_cursor + 1) % pos_pool.size();
      }
    }
    return plan;
  };

  // Best-val-AUC snapshot.
  double best_auc = -1.0;
  std::vector<nn::Mat<float>> best_values;
  auto all_params = model.net().params();
  auto snapshot = [&] {
    best_values.clear();
    for (const auto* p : all_params) best_values.push_back(p->value);
  };
  snapshot();

  auto val_auc_now = [&]() {
    ScoredSet s;
    s.labels.reserve(val.size());
    s.scores.reserve(val.size());
    for (const auto& v : val) {
      s.labels.push_back(v.label);
      const float logit = model.net().logit(image_to_mat<float>(v.pixels), false);
      s.scores.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(logit))));
    }
    bool pos = false, neg = false;
    for (int l : s.labels) (l ? pos : neg) = true;
    if (!pos || !neg) return 0.5;  // degenerate val set: AUC undefined, treat as chance
    return roc_auc(s);
  };

  int plateau_count = 0;
  int stall_count = 0;
  double lr = cfg.lr;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto plan = plan_epoch();
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < plan.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(plan.size(), start + static_cast<std::size_t>(cfg.batch));
      const float inv_b = 1.0f / static_cast<float>(end - start);
      adam.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = train[plan[i].index];
        const ImageF img = any_aug ? augment(ex.pixels, cfg, rng) : ex.pixels;
        const float logit = model.net().logit(image_to_mat<float>(img), true);
        const double w = plan[i].weight;
        const double l = static_cast<double>(logit);
        // Stable BCE-with-logits.
        const double bce = std::max(l, 0.0) - l * ex.label + std::log1p(std::exp(-std::abs(l)));
        epoch_loss += w * bce;
        const double sigma = 1.0 / (1.0 + std::exp(-l));
        model.net().backward_logit(static_cast<float>(w * (sigma - ex.label)) * inv_b);
      }
      adam.step();
    }
    epoch_loss /= static_cast<double>(plan.size());
    if (!std::isfinite(epoch_loss)) {
      throw NumericalError("classifier training diverged at epoch " + std::to_string(epoch));
    }

    const double auc = val_auc_now();
    model.history.push_back({epoch_loss, auc, lr});

    if (auc > best_auc + cfg.min_delta) {
      best_auc = auc;
      snapshot();
      plateau_count = 0;
      stall_count = 0;
    } else {
      ++plateau_count;
      ++stall_count;
      if (plateau_count >= cfg.plateau_patience) {
        lr *= cfg.plateau_decay;
        adam.set_lr(lr);
        plateau_count = 0;
      }
      if (stall_count >= cfg.early_stop_patience) break;
    }
  }

  // Return the best-val-AUC checkpoint.
  for (std::size_t i = 0; i < all_params.size(); ++i) all_params[i]->value = best_values[i];
  return model;
}

std::vector<LabeledImage> load_labeled_images(const DatasetManifest& manifest,
                                              const std::filesystem::path& manifest_path,
                                              const ClassifierArch& arch, Split split) {
  std::vector<LabeledImage> out;
  for (const auto& r : manifest.records) {
    if (r.split != split) continue;
    const ImageF img = load_image(DatasetManifest::resolve(manifest_path, r.path));
    out.push_back({apply_resize_policy(arch, img), r.label == Label::lesion ? 1 : 0});
  }
  return out;
}

}  // namespace lesionforge
