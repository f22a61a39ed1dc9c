#include "lesionforge/translator.hpp"

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "lesionforge/error.hpp"

namespace lesionforge {

void TranslatorArch::validate() const {
  if (patch_side < 8) throw DataError("translator arch: patch side must be >= 8");
  if (base_channels < 1 || disc_base < 1) throw DataError("translator arch: channels must be >= 1");
  if (n_down < 1 || n_down > 4 || disc_n_down < 1 || disc_n_down > 5) {
    throw DataError("translator arch: downsampling depth out of range");
  }
  if (first_kernel % 2 == 0 || first_kernel < 3) {
    throw DataError("translator arch: first kernel must be odd and >= 3");
  }
  if (patch_side % (1 << n_down) != 0) {
    throw DataError("translator arch: patch side must be divisible by 2^n_down");
  }
}

namespace {

using json = nlohmann::json;

json arch_to_json(const TranslatorArch& a) {
  return json{{"patch_side", a.patch_side},   {"base_channels", a.base_channels},
              {"n_down", a.n_down},           {"first_kernel", a.first_kernel},
              {"disc_base", a.disc_base},     {"disc_n_down", a.disc_n_down}};
}

TranslatorArch arch_from_json(const json& j) {
  TranslatorArch a;
  a.patch_side = j.at("patch_side").get<int>();
  a.base_channels = j.at("base_channels").get<int>();
  a.n_down = j.at("n_down").get<int>();
  a.first_kernel = j.at("first_kernel").get<int>();
  a.disc_base = j.at("disc_base").get<int>();
  a.disc_n_down = j.at("disc_n_down").get<int>();
  return a;
}

constexpr char kMagic[8] = {'L', 'F', 'T', 'R', 'A', 'N', 'S', '1'};

}  // namespace

template <>
void Translator<float>::save(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());

  json header;
  header["arch"] = arch_to_json(arch_);
  header["seed"] = seed_;
  header["epoch"] = epoch;
  json plist = json::array();
  auto params = all_params();
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

template <>
Translator<float> Translator<float>::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw DataError("not a translator checkpoint: " + path.string());
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw DataError("truncated checkpoint header: " + path.string());
  const json header = json::parse(htext);

  Translator<float> model(arch_from_json(header.at("arch")), header.at("seed").get<std::uint64_t>());
  model.epoch = header.at("epoch").get<int>();
  auto params = model.all_params();
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
  return model;
}

TranslatorTrainStats train_translator(Translator<float>& model,
                                      const std::vector<ImageF>& lesion_patches,
                                      const std::vector<ImageF>& nonlesion_patches,
                                      const TranslatorTrainConfig& cfg) {
  if (lesion_patches.empty() || nonlesion_patches.empty()) {
    throw DataError("train_translator: both domains need at least one patch");
  }
  using M = nn::Mat<float>;

  std::vector<M> xl, xh;
  xl.reserve(lesion_patches.size());
  xh.reserve(nonlesion_patches.size());
  for (const auto& p : lesion_patches) xl.push_back(image_to_mat<float>(p));
  for (const auto& p : nonlesion_patches) xh.push_back(image_to_mat<float>(p));

  nn::Adam<float> adam_g(model.generator_params(), cfg.lr, cfg.beta1, cfg.beta2);
  nn::Adam<float> adam_d(model.discriminator_params(), cfg.lr, cfg.beta1, cfg.beta2);

  Rng rng(derive_seed(cfg.seed, "translator-train"));
  TranslatorTrainStats stats;

  std::vector<std::size_t> order(xl.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int ep = 0; ep < cfg.epochs; ++ep) {
    rng.shuffle(order.begin(), order.end());
    std::array<double, 6> sums{};  // vae_l, gan_l, cc_l, vae_h, gan_h, cc_h
    int steps = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const auto bsz = static_cast<float>(end - start);
      const float scale = 1.0f / bsz;

      struct Pair {
        const M* l;
        const M* h;
      };
      std::vector<Pair> batch;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back({&xl[order[i]], &xh[rng.uniform_int(0, static_cast<int>(xh.size()) - 1)]});
      }

      // Discriminator phase on detached translations.
      adam_d.zero_grad();
      double gan_l = 0.0, gan_h = 0.0;
      for (const auto& pr : batch) {
        M fake_l = model.fake_sample(Domain::lesion, *pr.h, model.draw_noise(rng));
        M fake_h = model.fake_sample(Domain::non_lesion, *pr.l, model.draw_noise(rng));
        gan_l -= model.disc_loss_sample(Domain::lesion, *pr.l, fake_l, cfg.weights, scale);
        gan_h -= model.disc_loss_sample(Domain::non_lesion, *pr.h, fake_h, cfg.weights, scale);
      }
      adam_d.step();

      // Generator/encoder phase.
      adam_g.zero_grad();
      double vae_l = 0.0, vae_h = 0.0, cc_l = 0.0, cc_h = 0.0;
      for (const auto& pr : batch) {
        vae_l += model.vae_loss_sample(Domain::lesion, *pr.l, model.draw_noise(rng), cfg.weights, scale);
        vae_h += model.vae_loss_sample(Domain::non_lesion, *pr.h, model.draw_noise(rng), cfg.weights,
                                       scale);
        model.gen_adv_loss_sample(Domain::lesion, *pr.h, model.draw_noise(rng), cfg.weights, scale);
        model.gen_adv_loss_sample(Domain::non_lesion, *pr.l, model.draw_noise(rng), cfg.weights, scale);
        cc_l += model.cycle_loss_sample(Domain::lesion, *pr.l, model.draw_noise(rng),
                                        model.draw_noise(rng), cfg.weights, scale);
        cc_h += model.cycle_loss_sample(Domain::non_lesion, *pr.h, model.draw_noise(rng),
                                        model.draw_noise(rng), cfg.weights, scale);
      }
      adam_g.step();

      sums[0] += vae_l / bsz;
      sums[1] += gan_l / bsz;
      sums[2] += cc_l / bsz;
      sums[3] += vae_h / bsz;
      sums[4] += gan_h / bsz;
      sums[5] += cc_h / bsz;
      ++steps;
    }

    std::array<double, 6> means{};
    for (std::size_t i = 0; i < 6; ++i) means[i] = sums[i] / std::max(1, steps);
    for (double m : means) {
      if (!std::isfinite(m)) {
        throw NumericalError("translator training diverged (non-finite loss) at epoch " +
                             std::to_string(ep));
      }
    }
    stats.epoch_terms.push_back(means);
    model.epoch = ep + 1;
  }

  if (!cfg.loss_curve_csv.empty()) write_loss_curve_csv(cfg.loss_curve_csv, stats);
  return stats;
}

void write_loss_curve_csv(const std::filesystem::path& path, const TranslatorTrainStats& stats) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write loss curve: " + path.string());
  out << "epoch,vae_l,gan_l,cc_l,vae_h,gan_h,cc_h\n";
  char buf[64];
  for (std::size_t e = 0; e < stats.epoch_terms.size(); ++e) {
    out << e;
    for (double v : stats.epoch_terms[e]) {
      std::snprintf(buf, sizeof(buf), "%.6f", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace lesionforge
