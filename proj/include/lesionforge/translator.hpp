#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "lesionforge/feature_map.hpp"
#include "lesionforge/image.hpp"
#include "lesionforge/nn.hpp"

namespace lesionforge {

enum class Domain { lesion, non_lesion };

inline Domain other_domain(Domain d) {
  return d == Domain::lesion ? Domain::non_lesion : Domain::lesion;
}

// Loss-term weights of the joint objective. Defaults follow the published
// configuration of the shared-latent translation framework this model is
// patterned on; they ship as config fields, not constants baked into the
// training loop.
struct LossWeights {
  double adversarial = 10.0;          // weight on the GAN terms
  double kl = 0.1;                    // weight on the VAE KL terms
  double reconstruction = 100.0;      // weight on the VAE L1 reconstruction
  double cycle_kl = 0.1;              // weight on both cycle KL terms
  double cycle_reconstruction = 100.0;  // weight on the cycle L1 reconstruction
};

struct TranslatorArch {
  int patch_side = 128;
  int base_channels = 8;
  int n_down = 2;        // stride-2 encoder stages; latent channels = base * 2^n_down
  int first_kernel = 7;  // entry/exit convolution kernel (odd)
  int disc_base = 12;
  int disc_n_down = 2;

  int latent_channels() const { return base_channels << n_down; }
  int latent_side() const { return patch_side >> n_down; }
  void validate() const;
};

// Closed-form KL(N(mu, diag(sigma^2)) || N(0, I)) summed over dimensions.
template <typename D1, typename D2>
double gaussian_kl(const Eigen::MatrixBase<D1>& mu, const Eigen::MatrixBase<D2>& sigma) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double m = static_cast<double>(mu.derived().data()[i]);
    const double s = static_cast<double>(sigma.derived().data()[i]);
    kl += 0.5 * (m * m + s * s - 1.0 - std::log(s * s));
  }
  return kl;
}

template <typename S>
struct LatentCode {
  nn::Mat<S> mean;
  nn::Mat<S> z;  // mean + eps during sampling, mean at inference
  int channels = 0;
  int side = 0;
};

// Shared-latent cycle-consistent translation model: two VAEs whose deepest
// encoder block and first generator block are one physical parameter set,
// plus one patch discriminator per domain.
template <typename S>
class Translator {
 public:
  using M = nn::Mat<S>;

  Translator(const TranslatorArch& arch, std::uint64_t init_seed) : arch_(arch), seed_(init_seed) {
    arch.validate();
    Rng rng(init_seed);
    build(rng);
  }

  const TranslatorArch& arch() const { return arch_; }
  std::uint64_t init_seed() const { return seed_; }
  int epoch = 0;

  // --- inference -------------------------------------------------------------

  LatentCode<S> encode(Domain d, const ImageF& patch, Rng* sampler = nullptr) {
    check_patch(patch);
    M mu = encode_mean(d, image_to_mat<S>(patch), false);
    LatentCode<S> code;
    code.mean = mu;
    code.channels = arch_.latent_channels();
    code.side = arch_.latent_side();
    if (sampler) {
      code.z = mu;
      for (Eigen::Index i = 0; i < code.z.size(); ++i) {
        code.z.data()[i] += static_cast<S>(sampler->normal());
      }
    } else {
      code.z = mu;
    }
    return code;
  }

  ImageF decode(Domain d, const M& z) {
    if (z.rows() != arch_.latent_channels() ||
        z.cols() != static_cast<Eigen::Index>(arch_.latent_side()) * arch_.latent_side()) {
      throw DataError("translator decode: latent shape mismatch");
    }
    M out = decode_from(d, z, false);
    return mat_to_image(out, arch_.patch_side, arch_.patch_side);
  }

  // Deterministic mean-code translation x -> other domain.
  ImageF translate(const ImageF& patch, Domain from, Domain to) {
    check_patch(patch);
    M mu = encode_mean(from, image_to_mat<S>(patch), false);
    M out = decode_from(to, mu, false);
    return mat_to_image(out, arch_.patch_side, arch_.patch_side);
  }

  // --- loss terms (per-sample; grad_scale == 0 skips backprop) ----------------

  // Eq-style VAE term: kl_w * KL(q(z|x) || N(0,I)) + recon_w * |x - G(z)|_1,
  // with the fixed unit-variance posterior z = mu + eps.
  S vae_loss_sample(Domain d, const M& x, const M& eps, const LossWeights& lw, S grad_scale) {
    const bool grads = grad_scale != S(0);
    M mu = encode_mean(d, x, grads);
    M z = eps.size() ? M(mu + eps) : mu;
    M xhat = decode_from(d, z, grads);

    const double kl = 0.5 * static_cast<double>(mu.squaredNorm());
    const double recon = static_cast<double>((xhat - x).template lpNorm<1>());
    const S loss = static_cast<S>(lw.kl * kl + lw.reconstruction * recon);

    if (grads) {
      M dxhat = (xhat - x).unaryExpr([s = static_cast<S>(lw.reconstruction) * grad_scale](S v) {
        return v > S(0) ? s : (v < S(0) ? -s : S(0));
      });
      M dz = decode_backward(d, dxhat);
      M dmu = dz + M(mu * (static_cast<S>(lw.kl) * grad_scale));
      encode_backward(d, dmu);
    }
    return loss;
  }

  // Cycle term: x -> other domain -> re-encode -> back, with KL on both codes.
  S cycle_loss_sample(Domain src, const M& x, const M& eps1, const M& eps2, const LossWeights& lw,
                      S grad_scale) {
    const bool grads = grad_scale != S(0);
    const Domain dst = other_domain(src);

    M mu1 = encode_mean(src, x, grads);
    M z1 = eps1.size() ? M(mu1 + eps1) : mu1;
    M xt = decode_from(dst, z1, grads);
    M mu2 = encode_mean(dst, xt, grads);
    M z2 = eps2.size() ? M(mu2 + eps2) : mu2;
    M xback = decode_from(src, z2, grads);

    const double kl = 0.5 * (static_cast<double>(mu1.squaredNorm()) + static_cast<double>(mu2.squaredNorm()));
    const double recon = static_cast<double>((xback - x).template lpNorm<1>());
    const S loss = static_cast<S>(lw.cycle_kl * kl + lw.cycle_reconstruction * recon);

    if (grads) {
      M dxback = (xback - x).unaryExpr([s = static_cast<S>(lw.cycle_reconstruction) * grad_scale](S v) {
        return v > S(0) ? s : (v < S(0) ? -s : S(0));
      });
      M dz2 = decode_backward(src, dxback);
      M dmu2 = dz2 + M(mu2 * (static_cast<S>(lw.cycle_kl) * grad_scale));
      M dxt = encode_backward(dst, dmu2);
      M dz1 = decode_backward(dst, dxt);
      M dmu1 = dz1 + M(mu1 * (static_cast<S>(lw.cycle_kl) * grad_scale));
      encode_backward(src, dmu1);
    }
    return loss;
  }

  // Discriminator loss for one (real, fake) pair in the target domain:
  // -adv_w * [log D(real) + log(1 - D(fake))]. Gradients flow into D only
  // (callers pass detached fakes).
  S disc_loss_sample(Domain target, const M& real, const M& fake, const LossWeights& lw,
                     S grad_scale) {
    const bool grads = grad_scale != S(0);
    auto& D = disc(target);
    M map_real = D.forward(real, grads);
    M map_fake = D.forward(fake, grads);
    const double p_real = clamp_prob(map_real.mean());
    const double p_fake = clamp_prob(map_fake.mean());
    const S loss = static_cast<S>(-lw.adversarial * (std::log(p_real) + std::log(1.0 - p_fake)));
    if (grads) {
      // LIFO: fake was cached last, so it unwinds first.
      const double n = static_cast<double>(map_fake.size());
      M dfake = M::Constant(map_fake.rows(), map_fake.cols(),
                            static_cast<S>(lw.adversarial / ((1.0 - p_fake) * n)) * grad_scale);
      D.backward(dfake);
      M dreal = M::Constant(map_real.rows(), map_real.cols(),
                            static_cast<S>(-lw.adversarial / (p_real * n)) * grad_scale);
      D.backward(dreal);
    }
    return loss;
  }

  // Non-saturating generator loss -adv_w * log D(G(E(x_other))), with
  // gradients into the encoder/generator path (discriminator gradients are
  // also touched but zeroed before the next discriminator update).
  S gen_adv_loss_sample(Domain target, const M& x_other, const M& eps, const LossWeights& lw,
                        S grad_scale) {
    const bool grads = grad_scale != S(0);
    const Domain source = other_domain(target);
    M mu = encode_mean(source, x_other, grads);
    M z = eps.size() ? M(mu + eps) : mu;
    M fake = decode_from(target, z, grads);
    auto& D = disc(target);
    M map = D.forward(fake, grads);
    const double p = clamp_prob(map.mean());
    const S loss = static_cast<S>(-lw.adversarial * std::log(p));
    if (grads) {
      const double n = static_cast<double>(map.size());
      M dmap = M::Constant(map.rows(), map.cols(),
                           static_cast<S>(-lw.adversarial / (p * n)) * grad_scale);
      M dfake = D.backward(dmap);
      M dz = decode_backward(target, dfake);
      encode_backward(source, dz);
    }
    return loss;
  }

  // The min-max adversarial value for logging and tests:
  // adv_w * [E log D(real) + E log(1 - D(translated))].
  double adversarial_value(Domain target, std::span<const M> real, std::span<const M> translated,
                           const LossWeights& lw) {
    double sum_real = 0.0, sum_fake = 0.0;
    for (const auto& x : real) sum_real += std::log(clamp_prob(disc(target).forward(x, false).mean()));
    for (const auto& x : translated) {
      sum_fake += std::log(1.0 - clamp_prob(disc(target).forward(x, false).mean()));
    }
    const double er = real.empty() ? 0.0 : sum_real / static_cast<double>(real.size());
    const double ef = translated.empty() ? 0.0 : sum_fake / static_cast<double>(translated.size());
    return lw.adversarial * (er + ef);
  }

  // Value-only pair (discriminator_loss, generator_loss) for a fixed batch.
  std::pair<double, double> gan_loss(Domain target, std::span<const M> real,
                                     std::span<const M> translated, const LossWeights& lw) {
    const double eq_value = adversarial_value(target, real, translated, lw);
    double gen = 0.0;
    for (const auto& x : translated) gen += -std::log(clamp_prob(disc(target).forward(x, false).mean()));
    gen = translated.empty() ? 0.0 : lw.adversarial * gen / static_cast<double>(translated.size());
    return {-eq_value, gen};
  }

  struct TermBreakdown {
    double vae_l = 0, gan_l = 0, cc_l = 0, vae_h = 0, gan_h = 0, cc_h = 0;
    double sum() const { return vae_l + gan_l + cc_l + vae_h + gan_h + cc_h; }
  };

  // The six named terms of the joint objective, evaluated at the code mean.
  TermBreakdown total_objective(std::span<const M> lesion_batch, std::span<const M> nonlesion_batch,
                                const LossWeights& lw) {
    TermBreakdown t;
    const M no_eps;
    for (const auto& x : lesion_batch) {
      t.vae_l += vae_loss_sample(Domain::lesion, x, no_eps, lw, S(0));
      t.cc_l += cycle_loss_sample(Domain::lesion, x, no_eps, no_eps, lw, S(0));
    }
    for (const auto& x : nonlesion_batch) {
      t.vae_h += vae_loss_sample(Domain::non_lesion, x, no_eps, lw, S(0));
      t.cc_h += cycle_loss_sample(Domain::non_lesion, x, no_eps, no_eps, lw, S(0));
    }
    if (!lesion_batch.empty()) {
      t.vae_l /= static_cast<double>(lesion_batch.size());
      t.cc_l /= static_cast<double>(lesion_batch.size());
    }
    if (!nonlesion_batch.empty()) {
      t.vae_h /= static_cast<double>(nonlesion_batch.size());
      t.cc_h /= static_cast<double>(nonlesion_batch.size());
    }
    std::vector<M> to_l, to_h;
    for (const auto& x : nonlesion_batch) {
      to_l.push_back(translate_mat(x, Domain::non_lesion, Domain::lesion));
    }
    for (const auto& x : lesion_batch) {
      to_h.push_back(translate_mat(x, Domain::lesion, Domain::non_lesion));
    }
    t.gan_l = adversarial_value(Domain::lesion, lesion_batch, to_l, lw);
    t.gan_h = adversarial_value(Domain::non_lesion, nonlesion_batch, to_h, lw);
    return t;
  }

  M translate_mat(const M& x, Domain from, Domain to) {
    return decode_from(to, encode_mean(from, x, false), false);
  }

  // Detached sampled translation for discriminator updates: no caches, no
  // gradient flow into the encoder/generator.
  M fake_sample(Domain target, const M& x_other, const M& eps) {
    M mu = encode_mean(other_domain(target), x_other, false);
    M z = eps.size() ? M(mu + eps) : mu;
    return decode_from(target, z, false);
  }

  M draw_noise(Rng& rng) const {
    M eps(arch_.latent_channels(), static_cast<Eigen::Index>(arch_.latent_side()) * arch_.latent_side());
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = static_cast<S>(rng.normal());
    return eps;
  }

  // --- parameter views ---------------------------------------------------------

  std::vector<nn::Param<S>*> generator_params() {
    std::vector<nn::Param<S>*> out;
    for (auto* m : {&enc_priv_l_, &enc_priv_h_, &enc_shared_, &gen_shared_, &gen_priv_l_, &gen_priv_h_}) {
      auto p = m->params();
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  std::vector<nn::Param<S>*> discriminator_params() {
    std::vector<nn::Param<S>*> out;
    for (auto* m : {&disc_l_, &disc_h_}) {
      auto p = m->params();
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  // Per-domain encoder parameter view: private stage plus the shared block.
  // Both domains' views alias the same shared storage.
  std::vector<nn::Param<S>*> encoder_params(Domain d) {
    auto out = (d == Domain::lesion ? enc_priv_l_ : enc_priv_h_).params();
    auto shared = enc_shared_.params();
    out.insert(out.end(), shared.begin(), shared.end());
    return out;
  }

  std::vector<nn::Param<S>*> shared_params() {
    auto out = enc_shared_.params();
    auto g = gen_shared_.params();
    out.insert(out.end(), g.begin(), g.end());
    return out;
  }

  std::vector<nn::Param<S>*> all_params() {
    auto out = generator_params();
    auto d = discriminator_params();
    out.insert(out.end(), d.begin(), d.end());
    return out;
  }

  // --- checkpoint io -------------------------------------------------------------

  void save(const std::filesystem::path& path);
  static Translator<S> load(const std::filesystem::path& path);

 private:
  void check_patch(const ImageF& p) const {
    if (p.rows() != arch_.patch_side || p.cols() != arch_.patch_side) {
      throw DataError("translator: patch is not at the model input size");
    }
  }

  static double clamp_prob(S p) {
    return std::clamp(static_cast<double>(p), 1e-7, 1.0 - 1e-7);
  }

  M encode_mean(Domain d, const M& x, bool cache) {
    return enc_shared_.forward((d == Domain::lesion ? enc_priv_l_ : enc_priv_h_).forward(x, cache),
                               cache);
  }

  M encode_backward(Domain d, const M& dmu) {
    return (d == Domain::lesion ? enc_priv_l_ : enc_priv_h_).backward(enc_shared_.backward(dmu));
  }

  M decode_from(Domain d, const M& z, bool cache) {
    return (d == Domain::lesion ? gen_priv_l_ : gen_priv_h_)
        .forward(gen_shared_.forward(z, cache), cache);
  }

  M decode_backward(Domain d, const M& dx) {
    return gen_shared_.backward((d == Domain::lesion ? gen_priv_l_ : gen_priv_h_).backward(dx));
  }

  nn::Sequential<S>& disc(Domain d) { return d == Domain::lesion ? disc_l_ : disc_h_; }

  void build_encoder_private(nn::Sequential<S>& seq, const std::string& name, Rng& rng) {
    const int kf = arch_.first_kernel;
    nn::Shape shape{1, arch_.patch_side, arch_.patch_side};
    auto* c0 = seq.template add<nn::Conv2d<S>>(shape, arch_.base_channels, kf, 1, (kf - 1) / 2, 1,
                                               name + ".in");
    c0->init_he(rng);
    shape = c0->out_shape();
    seq.template add<nn::LeakyReLU<S>>(shape, 0.2);
    for (int i = 0; i < arch_.n_down; ++i) {
      auto* c = seq.template add<nn::Conv2d<S>>(shape, arch_.base_channels << (i + 1), 3, 2, 1, 1,
                                                name + ".down" + std::to_string(i));
      c->init_he(rng);
      shape = c->out_shape();
      seq.template add<nn::LeakyReLU<S>>(shape, 0.2);
    }
  }

  void build_generator_private(nn::Sequential<S>& seq, const std::string& name, Rng& rng) {
    nn::Shape shape{arch_.latent_channels(), arch_.latent_side(), arch_.latent_side()};
    for (int i = arch_.n_down; i >= 1; --i) {
      auto* c = seq.template add<nn::ConvTranspose2d<S>>(shape, arch_.base_channels << (i - 1), 4, 2, 1,
                                                         name + ".up" + std::to_string(i));
      c->init_he(rng);
      shape = c->out_shape();
      seq.template add<nn::LeakyReLU<S>>(shape, 0.2);
    }
    const int kf = arch_.first_kernel;
    auto* out = seq.template add<nn::Conv2d<S>>(shape, 1, kf, 1, (kf - 1) / 2, 1, name + ".out");
    out->init_he(rng);
    shape = out->out_shape();
    seq.template add<nn::Sigmoid<S>>(shape);
  }

  void build_discriminator(nn::Sequential<S>& seq, const std::string& name, Rng& rng) {
    nn::Shape shape{1, arch_.patch_side, arch_.patch_side};
    int ch = arch_.disc_base;
    for (int i = 0; i < arch_.disc_n_down; ++i) {
      auto* c = seq.template add<nn::Conv2d<S>>(shape, ch, 3, 2, 1, 1, name + ".d" + std::to_string(i));
      c->init_he(rng);
      shape = c->out_shape();
      seq.template add<nn::LeakyReLU<S>>(shape, 0.2);
      ch *= 2;
    }
    auto* out = seq.template add<nn::Conv2d<S>>(shape, 1, 3, 1, 1, 1, name + ".out");
    out->init_he(rng);
    seq.template add<nn::Sigmoid<S>>(out->out_shape());
  }

  void build(Rng& rng) {
    // Fixed construction order keeps initialization reproducible.
    build_encoder_private(enc_priv_l_, "enc_l", rng);
    build_encoder_private(enc_priv_h_, "enc_h", rng);
    auto* enc_res = enc_shared_.template add<nn::ResBlock<S>>(
        nn::Shape{arch_.latent_channels(), arch_.latent_side(), arch_.latent_side()}, 0.2, "enc_shared");
    enc_res->init_he(rng);
    auto* gen_res = gen_shared_.template add<nn::ResBlock<S>>(
        nn::Shape{arch_.latent_channels(), arch_.latent_side(), arch_.latent_side()}, 0.2, "gen_shared");
    gen_res->init_he(rng);
    build_generator_private(gen_priv_l_, "gen_l", rng);
    build_generator_private(gen_priv_h_, "gen_h", rng);
    build_discriminator(disc_l_, "disc_l", rng);
    build_discriminator(disc_h_, "disc_h", rng);
  }

  TranslatorArch arch_;
  std::uint64_t seed_;
  nn::Sequential<S> enc_priv_l_, enc_priv_h_, enc_shared_;
  nn::Sequential<S> gen_shared_, gen_priv_l_, gen_priv_h_;
  nn::Sequential<S> disc_l_, disc_h_;
};

// --- training --------------------------------------------------------------------

struct TranslatorTrainConfig {
  int epochs = 50;
  int batch = 4;
  double lr = 1e-4;   // optimizer family/rate shared with the classifier unless overridden
  double beta1 = 0.5;
  double beta2 = 0.999;
  LossWeights weights;
  std::uint64_t seed = 0;
  std::filesystem::path loss_curve_csv;  // written when non-empty
};

struct TranslatorTrainStats {
  // Per epoch: vae_l, gan_l, cc_l, vae_h, gan_h, cc_h (gan terms are the
  // min-max adversarial values).
  std::vector<std::array<double, 6>> epoch_terms;
};

// Alternating discriminator/generator optimization of the joint objective on
// balanced batches. Throws DataError on an empty domain and NumericalError
// when the loss diverges to NaN.
TranslatorTrainStats train_translator(Translator<float>& model, const std::vector<ImageF>& lesion_patches,
                                      const std::vector<ImageF>& nonlesion_patches,
                                      const TranslatorTrainConfig& cfg);

void write_loss_curve_csv(const std::filesystem::path& path, const TranslatorTrainStats& stats);

}  // namespace lesionforge
