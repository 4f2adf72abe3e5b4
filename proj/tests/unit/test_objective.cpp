#include <set>

#include "fixtures.hpp"
#include "genvp/error.hpp"
#include "genvp/objective.hpp"
#include "genvp/trainer.hpp"

// After the torch headers, whose logging macros include a CHECK.
#include <doctest.h>

using namespace genvp;

namespace {

ModelDims tiny() {
  ModelDims d;
  d.height = 8;
  d.width = 8;
  d.latent = 6;
  d.object = 4;
  d.row = 5;
  d.hidden = 8;
  d.base_channels = 2;
  d.max_channels = 4;
  d.rule_rows = 3;
  return d;
}

torch::Tensor hot(std::vector<int> cols) {
  std::vector<std::int64_t> idx(cols.begin(), cols.end());
  return torch::one_hot(torch::tensor(idx), kRuleCols).to(torch::kDouble);
}

// Every view (and the logs) equal to `p` [B, K, 5].
ViewPredictions constant_views(const torch::Tensor& p, int rows = 3, int cols = 3) {
  ViewPredictions v;
  const auto B = p.size(0);
  v.full = p;
  v.rows = p;
  v.context = p.unsqueeze(1).expand({B, rows * cols, p.size(1), 5});
  v.prows = p.unsqueeze(1).expand({B, rows, p.size(1), 5});
  return v;
}

Batch random_batch(const ModelDims& d, int B, int A, std::uint64_t seed) {
  auto gen = make_generator(seed);
  Batch b;
  b.panels = torch::rand({B, d.panels(), 1, d.height, d.width}, gen, torch::kDouble);
  b.negatives = torch::rand({B, A, 1, d.height, d.width}, gen, torch::kDouble);
  b.rules = torch::one_hot(torch::randint(5, {B, d.rule_rows}, gen, torch::kLong), 5).to(torch::kDouble);
  b.negative_rules =
      torch::one_hot(torch::randint(5, {B, A, d.rule_rows}, gen, torch::kLong), 5).to(torch::kDouble);
  return b;
}

Dataset small_dataset(int n) {
  Dataset d;
  d.config = fixtures::generation();
  d.manifest.height = 8;
  d.manifest.width = 8;
  RenderOptions r{8, 8};
  for (int i = 0; i < n; ++i) d.samples.push_back(make_sample(d.config, r, 3, i));
  return d;
}

}  // namespace

TEST_CASE("kl_gaussian closed form") {
  const Gaussian p{torch::randn({5}, torch::kDouble), torch::randn({5}, torch::kDouble)};
  CHECK(kl_gaussian(p, p).item<double>() == doctest::Approx(0.0));
  const Gaussian q{torch::tensor({1.0, -2.0}), torch::zeros({2}, torch::kDouble)};
  const Gaussian std_normal{torch::zeros({2}, torch::kDouble), torch::zeros({2}, torch::kDouble)};
  const auto terms = kl_gaussian_terms(q, std_normal);
  CHECK(terms[0].item<double>() == doctest::Approx(0.5));
  CHECK(terms[1].item<double>() == doctest::Approx(2.0));
  CHECK_THROWS_AS(kl_gaussian(q, p), ContractError);

  // Monte-Carlo oracle with 10^6 draws.
  auto gen = make_generator(5);
  const Gaussian a{torch::randn({3}, gen, torch::kDouble), torch::randn({3}, gen, torch::kDouble) * 0.5};
  const Gaussian b{torch::randn({3}, gen, torch::kDouble), torch::randn({3}, gen, torch::kDouble) * 0.5};
  const int n = 1000000;
  const auto x = a.mean + (0.5 * a.logvar).exp() * torch::randn({n, 3}, gen, torch::kDouble);
  const auto logpdf = [](const Gaussian& g, const torch::Tensor& v) {
    return (-0.5 * (g.logvar + (v - g.mean).square() / g.logvar.exp())).sum(-1);
  };
  const double mc = (logpdf(a, x) - logpdf(b, x)).mean().item<double>();
  const double exact = kl_gaussian(a, b).item<double>();
  CHECK(std::abs(mc - exact) / exact < 0.01);
}

TEST_CASE("contrast masks") {
  const auto r = hot({0, 3, 4});
  const auto same = contrast_masks(r, r);
  CHECK(same.differ.sum().item<double>() == 0.0);
  CHECK(torch::equal(same.agree, r));

  const auto other = hot({1, 2, 0});
  const auto m = contrast_masks(r, other);
  CHECK(torch::equal(m.differ.sum(-1), torch::full({3}, 2.0, torch::kDouble)));
  CHECK(m.agree.sum().item<double>() == 0.0);
  CHECK((m.differ * m.agree).sum().item<double>() == 0.0);
  CHECK_THROWS_AS(contrast_masks(r, hot({1, 2})), ContractError);
}

TEST_CASE("pair contrast g") {
  const auto r1 = hot({0, 1, 2}).unsqueeze(0);
  const auto r2 = hot({3, 4, 0}).unsqueeze(0);
  CHECK(contrast_g(constant_views(r2), r1, r2).item<double>() == doctest::Approx(0.0));
  // Each of the four groups contributes 2·K_R.
  CHECK(contrast_g(constant_views(r1), r1, r2).item<double>() == doctest::Approx(4 * 2 * 3));
  const auto p = torch::softmax(torch::randn({1, 3, 5}, torch::kDouble), -1);
  CHECK(contrast_g(constant_views(p), r2, r2).item<double>() <= 0.0);
}

TEST_CASE("batch global contrast") {
  auto gen = make_generator(3);
  const auto rules = torch::one_hot(torch::randint(5, {4, 3}, gen, torch::kLong), 5).to(torch::kDouble);
  const auto p = torch::softmax(torch::randn({4, 3, 5}, gen, torch::kDouble), -1);
  const auto v = constant_views(p);

  const auto two = batch_global_contrast(constant_views(p.narrow(0, 0, 2)), rules.narrow(0, 0, 2));
  const auto g12 = contrast_g(constant_views(p.narrow(0, 0, 1)), rules.narrow(0, 0, 1), rules.narrow(0, 1, 1));
  const auto g21 = contrast_g(constant_views(p.narrow(0, 1, 1)), rules.narrow(0, 1, 1), rules.narrow(0, 0, 1));
  CHECK(two.item<double>() == doctest::Approx(((g12 + g21) / 2).item<double>()));

  // Brute-force double sum.
  double brute = 0.0;
  for (int b = 0; b < 4; ++b) {
    for (int i = 0; i < 4; ++i) {
      if (i == b) continue;
      brute += contrast_g(constant_views(p.narrow(0, b, 1)), rules.narrow(0, b, 1), rules.narrow(0, i, 1))
                   .item<double>();
    }
  }
  CHECK(batch_global_contrast(v, rules).item<double>() == doctest::Approx(brute / 12));

  const auto perm = torch::tensor({2, 0, 3, 1});
  CHECK(batch_global_contrast(constant_views(p.index_select(0, perm)), rules.index_select(0, perm)).item<double>() ==
        doctest::Approx(brute / 12));

  const auto same_rules = rules.narrow(0, 0, 1).expand({4, 3, 5});
  const auto same_p = p.narrow(0, 0, 1).expand({4, 3, 5});
  CHECK(batch_global_contrast(constant_views(same_p), same_rules).item<double>() <= 0.0);
  CHECK_THROWS_AS(batch_global_contrast(constant_views(p.narrow(0, 0, 1)), rules.narrow(0, 0, 1)), ContractError);
}

TEST_CASE("local contrast") {
  const auto rules = hot({0, 1, 2}).unsqueeze(0);
  CHECK(local_contrast(constant_views(torch::zeros({0, 3, 5}, torch::kDouble)),
                       torch::zeros({1, 0, 3, 5}, torch::kDouble), rules)
            .item<double>() == 0.0);

  // Negatives with 1 and 2 perturbed rows; a perfect predictor returns R_i⁻.
  const auto n1 = hot({4, 1, 2});
  const auto n2 = hot({0, 4, 3});
  const auto neg = torch::stack({n1, n2}).unsqueeze(0);
  const auto views = constant_views(torch::stack({n1, n2}));
  CHECK(local_contrast(views, neg, rules).item<double>() == doctest::Approx(2 * (1 + 2) * 4));

  const auto only1 = local_contrast(constant_views(n1.unsqueeze(0)), n1.unsqueeze(0).unsqueeze(0), rules);
  const auto only2 = local_contrast(constant_views(n2.unsqueeze(0)), n2.unsqueeze(0).unsqueeze(0), rules);
  CHECK(local_contrast(views, neg, rules).item<double>() ==
        doctest::Approx((only1 + only2).item<double>()));
}

TEST_CASE("total objective terms") {
  const auto d = tiny();
  torch::manual_seed(1);
  GenVP m(d);
  m->to(torch::kDouble);
  const auto batch = random_batch(d, 3, 2, 8);
  TrainingConfig c;
  const auto full = total_objective(*m, batch, c, true, 4);
  CHECK(full.first_non_finite().empty());
  for (const auto* t : {&full.zobar, &full.zo, &full.zr, &full.z, &full.rec}) {
    CHECK(t->item<double>() >= 0.0);
  }
  const double expect = full.rec.item<double>() + full.zobar.item<double>() + full.zo.item<double>() +
                        full.zr.item<double>() + full.z.item<double>() +
                        250 * full.sup.item<double>() - 20 * full.global.item<double>() -
                        20 * full.local.item<double>();
  CHECK(full.total.item<double>() == doctest::Approx(expect).epsilon(1e-9));

  // Without contrast and annotations the total is the (negated) weighted ELBO.
  TrainingConfig plain = c;
  plain.beta_global = plain.beta_local = 0.0;
  plain.annotations_available = false;
  plain.beta_rule = 1.0;
  const auto e = total_objective(*m, batch, plain, true, 4);
  CHECK(e.sup.item<double>() == 0.0);
  CHECK(e.global.item<double>() == 0.0);
  CHECK(e.total.item<double>() ==
        doctest::Approx(e.rec.item<double>() + e.rule.item<double>() + e.zobar.item<double>() +
                        e.zo.item<double>() + e.zr.item<double>() + e.z.item<double>()));

  // Same noise seed, same value.
  CHECK(total_objective(*m, batch, c, true, 4).total.item<double>() == full.total.item<double>());
}

TEST_CASE("objective gradient matches central differences on a small subset") {
  const auto d = tiny();
  torch::manual_seed(2);
  GenVP m(d);
  m->to(torch::kDouble);
  const auto batch = random_batch(d, 3, 2, 9);
  TrainingConfig c;
  const auto loss = [&] { return total_objective(*m, batch, c, true, 5).total; };
  m->zero_grad();
  loss().backward();
  torch::NoGradGuard g;
  double worst = 0.0;
  for (const auto& p : m->named_parameters()) {
    if (p.key().rfind("mixer.", 0) == 0) continue;
    auto flat = p.value().view(-1);
    const auto grad = p.value().grad().view(-1);
    for (std::int64_t i = 0; i < flat.size(0); i += std::max<std::int64_t>(1, flat.size(0) / 2)) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + 1e-5;
      const double up = loss().item<double>();
      flat[i] = orig - 1e-5;
      const double down = loss().item<double>();
      flat[i] = orig;
      const double numeric = (up - down) / 2e-5;
      const double analytic = grad[i].item<double>();
      worst = std::max(worst, std::abs(analytic - numeric) /
                                  std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("training config parsing") {
  const auto j = fixtures::load_json("config/default.json").at("training");
  const auto c = TrainingConfig::from_json(j);
  CHECK(c.beta_sup == 250.0);
  CHECK(c.beta_rule == 0.0);
  CHECK_THROWS_AS(TrainingConfig::from_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(TrainingConfig::from_json({{"batch_size", 1}}), ConfigError);
  CHECK_THROWS_AS(TrainingConfig::from_json({{"mixture", "median"}}), ConfigError);
  TrainingConfig w;
  w.steps = 10;
  CHECK(w.resolved_warmup() == 2);
  w.warmup_steps = 4;
  CHECK(w.resolved_warmup() == 4);

  w.kl_anneal_fraction = 0.5;
  CHECK(w.at_step(0).beta_zr == 0.0);
  CHECK(w.at_step(2).beta_zo == doctest::Approx(0.4));
  CHECK(w.at_step(2).beta_rec == 1.0);
  CHECK(w.at_step(5).beta_z == 1.0);
  CHECK_THROWS_AS(TrainingConfig::from_json({{"kl_anneal_fraction", 2.0}}), ConfigError);
}

TEST_CASE("training loop: zero steps, determinism, resume") {
  const auto data = small_dataset(12);
  auto dims = tiny();
  TrainingConfig c;
  c.batch_size = 4;
  c.learning_rate = 1e-3;
  c.seed = 5;

  c.steps = 0;
  torch::manual_seed(c.seed);
  GenVP fresh(dims);
  const auto zero = train(data, dims, c).model;
  for (const auto& p : fresh->named_parameters()) {
    CHECK(torch::equal(p.value(), zero->named_parameters()[p.key()]));
  }

  c.steps = 6;
  const auto a = train(data, dims, c);
  const auto b = train(data, dims, c);
  REQUIRE(a.metrics.size() == 6);
  CHECK(a.metrics == b.metrics);
  CHECK(a.metrics[0]["phase"] == "warmup");
  CHECK(a.metrics[5]["phase"] == "joint");

  const auto dir = std::filesystem::temp_directory_path() / "genvp_resume_test";
  std::filesystem::remove_all(dir);
  TrainOptions opts;
  opts.out_dir = dir;
  c.checkpoint_every = 3;
  train(data, dims, c, opts);
  TrainOptions again;
  again.resume = dir / "step_3.ckpt";
  const auto resumed = train(data, dims, c, again);
  REQUIRE(resumed.metrics.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(resumed.metrics[static_cast<std::size_t>(i)] == a.metrics[static_cast<std::size_t>(3 + i)]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("batches keep rules aligned under augmentation") {
  const auto data = small_dataset(8);
  const auto tensors = TensorData::from(data);
  const auto idx = batch_indices(8, 4, 1, 0);
  CHECK(idx.size() == 4);
  CHECK(std::set<int>(idx.begin(), idx.end()).size() == 4);
  CHECK(idx == batch_indices(8, 4, 1, 0));
  const auto plain = make_batch(data, tensors, idx, 0.0, 1, torch::kFloat);
  const auto aug = make_batch(data, tensors, idx, 1.0, 1, torch::kFloat);
  CHECK(torch::equal(plain.rules, aug.rules));
  CHECK(torch::equal(plain.negative_rules, aug.negative_rules));
  CHECK(plain.panels.sizes() == aug.panels.sizes());
  // The answer row is never moved by a row swap; flips change it.
  CHECK(plain.negatives.size(1) == 7);
}
