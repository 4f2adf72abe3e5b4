#include "genvp/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "genvp/error.hpp"
#include "genvp/serialize.hpp"

namespace genvp {

namespace nn = torch::nn;
using torch::indexing::Slice;

namespace {

constexpr std::array<std::string_view, 6> kMixtureNames = {
    "weighted-avg", "avg", "argmax-avg", "prod", "argmax-prod", "learned"};

Gaussian clamp(torch::Tensor mean, torch::Tensor logvar) {
  return {std::move(mean), logvar.clamp(kLogVarMin, kLogVarMax)};
}

Gaussian halves(const torch::Tensor& out) {
  auto parts = out.chunk(2, -1);
  return clamp(parts[0], parts[1]);
}

int channels_at(const ModelDims& d, int stage) {
  return std::min(d.base_channels << stage, d.max_channels);
}

// kept[i] lists the indices 0..n-1 other than i.
torch::Tensor leave_one_out(int n) {
  std::vector<std::int64_t> idx;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j != i) idx.push_back(j);
    }
  }
  return torch::tensor(idx, torch::kLong);
}

torch::Tensor one_hot_rows(int n, const torch::TensorOptions& opts) { return torch::eye(n, opts); }

torch::Tensor argmax_one_hot(const torch::Tensor& p) {
  return torch::one_hot(p.argmax(-1), p.size(-1)).to(p.options());
}

}  // namespace

int ModelDims::conv_stages() const { return std::countr_zero(static_cast<unsigned>(height)) - 1; }

void ModelDims::validate() const {
  if (height != width) throw ConfigError("panels must be square");
  if (height < 4 || !std::has_single_bit(static_cast<unsigned>(height))) {
    throw ConfigError("panel size must be a power of two >= 4");
  }
  if (latent < 1 || object < 1 || object > latent) {
    throw ConfigError("need 0 < object latent <= latent");
  }
  if (row < 1 || hidden < 1 || base_channels < 1 || max_channels < base_channels) {
    throw ConfigError("model widths must be positive");
  }
  if (rule_rows < 1 || rows < 2 || cols != 3) throw ConfigError("invalid puzzle shape for model");
}

nlohmann::json ModelDims::to_json() const {
  return {{"height", height},       {"width", width},   {"latent", latent},
          {"object", object},       {"row", row},       {"hidden", hidden},
          {"base_channels", base_channels}, {"max_channels", max_channels},
          {"rule_rows", rule_rows}, {"rows", rows},     {"cols", cols}};
}

ModelDims ModelDims::from_json(const nlohmann::json& j) {
  check_keys(j, {"height", "width", "latent", "object", "row", "hidden", "base_channels",
                 "max_channels", "rule_rows", "rows", "cols"},
             "model");
  ModelDims d;
  auto get = [&](const char* key, int& field) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number_integer()) {
      throw ConfigError(std::string("model.") + key + " must be an integer");
    }
    field = j.at(key).get<int>();
  };
  get("height", d.height);
  get("width", d.width);
  get("latent", d.latent);
  get("object", d.object);
  get("row", d.row);
  get("hidden", d.hidden);
  get("base_channels", d.base_channels);
  get("max_channels", d.max_channels);
  get("rule_rows", d.rule_rows);
  get("rows", d.rows);
  get("cols", d.cols);
  d.validate();
  return d;
}

std::string_view to_string(MixtureKind kind) { return kMixtureNames[static_cast<std::size_t>(kind)]; }

MixtureKind parse_mixture_kind(std::string_view name) {
  for (std::size_t i = 0; i < kMixtureNames.size(); ++i) {
    if (kMixtureNames[i] == name) return static_cast<MixtureKind>(i);
  }
  throw ConfigError("unknown mixture kind '" + std::string(name) + "'");
}

int ViewPredictions::view_count() const {
  return 2 + static_cast<int>(context.size(1)) + static_cast<int>(prows.size(1));
}

torch::Tensor ViewPredictions::stacked() const {
  return torch::cat({full.unsqueeze(1), context, prows, rows.unsqueeze(1)}, 1);
}

std::vector<std::string> view_names(int rows, int cols) {
  std::vector<std::string> out = {"full"};
  for (int i = 0; i < rows * cols; ++i) out.push_back("ctx-" + std::to_string(i + 1));
  for (int k = 0; k < rows; ++k) {
    std::string kept;
    for (int r = 0; r < rows; ++r) {
      if (r != k) kept += std::to_string(r + 1);
    }
    out.push_back("prow-" + kept);
  }
  out.push_back("rows");
  return out;
}

MlpImpl::MlpImpl(int in, int hidden, int out)
    : l1(register_module("l1", nn::Linear(in, hidden))),
      l2(register_module("l2", nn::Linear(hidden, out))) {}

torch::Tensor MlpImpl::forward(const torch::Tensor& x) { return l2(torch::silu(l1(x))); }

ImageEncoderImpl::ImageEncoderImpl(const ModelDims& d) {
  convs = register_module("convs", nn::Sequential());
  int in = 1;
  for (int s = 0; s < d.conv_stages(); ++s) {
    const int out = channels_at(d, s);
    convs->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
    convs->push_back(nn::SiLU());
    in = out;
  }
  mean_head = register_module("mean_head", nn::Linear(in * 4, d.latent));
  logvar_head = register_module("logvar_head", nn::Linear(in * 4, d.latent));
}

Gaussian ImageEncoderImpl::forward(const torch::Tensor& x) {
  const auto h = convs->forward(x).flatten(1);
  return clamp(mean_head(h), logvar_head(h));
}

ImageDecoderImpl::ImageDecoderImpl(const ModelDims& d) : dims(d) {
  const int stages = d.conv_stages();
  top_channels = channels_at(d, stages - 1);
  project = register_module("project", nn::Linear(d.latent, top_channels * 4));
  deconvs = register_module("deconvs", nn::Sequential());
  for (int s = stages - 1; s >= 0; --s) {
    const int in = channels_at(d, s);
    const int out = s == 0 ? 1 : channels_at(d, s - 1);
    deconvs->push_back(
        nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1)));
    if (s > 0) deconvs->push_back(nn::SiLU());
  }
  deconvs->push_back(nn::Sigmoid());
}

torch::Tensor ImageDecoderImpl::forward(const torch::Tensor& z) {
  const auto h = torch::silu(project(z)).view({-1, top_channels, 2, 2});
  return deconvs->forward(h);
}

MixerImpl::MixerImpl(int channels) {
  weight = register_parameter("weight", torch::full({channels}, 1.0 / channels));
  bias = register_parameter("bias", torch::zeros({kRuleCols}));
}

torch::Tensor MixerImpl::forward(const torch::Tensor& stacked) {
  const auto logits = (stacked * weight.view({1, -1, 1, 1})).sum(1) + bias;
  return torch::softmax(logits, -1);
}

GenVPImpl::GenVPImpl(const ModelDims& d) : dims_(d) {
  d.validate();
  const int P = d.panels();
  const int out = d.rule_rows * kRuleCols;
  encoder = register_module("encoder", ImageEncoder(d));
  decoder = register_module("decoder", ImageDecoder(d));
  row_encoder = register_module("row_encoder", Mlp(d.cols * d.object, d.hidden, 2 * d.row));
  rule_decoder = register_module("rule_decoder", Mlp(out, d.hidden, 2 * d.row));
  row_decoder = register_module("row_decoder", Mlp(d.row, d.hidden, 2 * d.cols * d.object));
  pred_full = register_module("pred_full", Mlp(P * d.object, d.hidden, out));
  pred_context = register_module("pred_context", Mlp((P - 1) * d.object + P, d.hidden, out));
  pred_prows = register_module(
      "pred_prows", Mlp((d.rows - 1) * d.cols * d.object + d.rows, d.hidden, out));
  pred_rows = register_module("pred_rows", Mlp(d.rows * d.row, d.hidden, out));
  mixer = register_module("mixer", Mixer(2 + P + d.rows));
}

std::vector<std::pair<std::string, torch::nn::Module*>> GenVPImpl::groups() {
  return {{"encoder", encoder.get()},         {"decoder", decoder.get()},
          {"row_encoder", row_encoder.get()}, {"rule_decoder", rule_decoder.get()},
          {"row_decoder", row_decoder.get()}, {"pred_full", pred_full.get()},
          {"pred_context", pred_context.get()}, {"pred_prows", pred_prows.get()},
          {"pred_rows", pred_rows.get()},     {"mixer", mixer.get()}};
}

Gaussian GenVPImpl::encode_image(const torch::Tensor& panels) {
  if (panels.dim() != 4 || panels.size(1) != 1 || panels.size(2) != dims_.height ||
      panels.size(3) != dims_.width) {
    throw ContractError("encode_image expects [N,1," + std::to_string(dims_.height) + "," +
                        std::to_string(dims_.width) + "] panels");
  }
  return encoder(panels);
}

torch::Tensor GenVPImpl::decode_image(const torch::Tensor& z) {
  if (z.size(-1) != dims_.latent) throw ContractError("decode_image: latent size mismatch");
  return decoder(z.reshape({-1, dims_.latent}));
}

Gaussian GenVPImpl::encode_rows(const torch::Tensor& z_o) {
  const auto B = z_o.size(0);
  if (z_o.dim() != 4 || z_o.size(1) != dims_.rows || z_o.size(2) != dims_.cols ||
      z_o.size(3) != dims_.object) {
    throw ContractError("encode_rows expects [B,M,N,K_o]");
  }
  return halves(row_encoder(z_o.reshape({B, dims_.rows, -1})));
}

Gaussian GenVPImpl::decode_rules(const torch::Tensor& rules) {
  if (rules.dim() != 3 || rules.size(1) != dims_.rule_rows || rules.size(2) != kRuleCols) {
    throw ContractError("decode_rules expects [B,K_R,5]");
  }
  const auto row_sums = rules.sum(-1);
  if (!torch::all(rules.eq(0) | rules.eq(1)).item<bool>() ||
      !torch::all(row_sums.eq(1)).item<bool>()) {
    throw ContractError("decode_rules needs one-hot rule rows");
  }
  const auto g = halves(rule_decoder(rules.flatten(1)));
  const auto B = rules.size(0);
  return {g.mean.unsqueeze(1).expand({B, dims_.rows, dims_.row}),
          g.logvar.unsqueeze(1).expand({B, dims_.rows, dims_.row})};
}

Gaussian GenVPImpl::decode_row_latent(const torch::Tensor& z_r) {
  if (z_r.dim() != 3 || z_r.size(1) != dims_.rows || z_r.size(2) != dims_.row) {
    throw ContractError("decode_row_latent expects [B,M,K_r]");
  }
  const auto out = row_decoder(z_r);  // [B,M,2*N*K_o]
  auto parts = out.chunk(2, -1);
  const auto shape = std::vector<std::int64_t>{z_r.size(0), dims_.rows, dims_.cols, dims_.object};
  return clamp(parts[0].reshape(shape), parts[1].reshape(shape));
}

torch::Tensor GenVPImpl::rule_softmax(const torch::Tensor& logits, torch::Tensor* log_out) const {
  auto shape = logits.sizes().vec();
  shape.back() = dims_.rule_rows;
  shape.push_back(kRuleCols);
  const auto logp = torch::log_softmax(logits.reshape(shape), -1);
  if (log_out) *log_out = logp;
  return logp.exp();
}

torch::Tensor GenVPImpl::predict_full(const torch::Tensor& z_o, torch::Tensor* log_out) {
  return rule_softmax(pred_full(z_o.flatten(1)), log_out);
}

torch::Tensor GenVPImpl::predict_context(const torch::Tensor& z_o, int k, int l,
                                         torch::Tensor* log_out) {
  if (k < 0 || k >= dims_.rows || l < 0 || l >= dims_.cols) {
    throw ContractError("context view index out of range");
  }
  const int P = dims_.panels();
  const int slot = k * dims_.cols + l;
  const auto flat = z_o.reshape({z_o.size(0), P, dims_.object});
  const auto kept = leave_one_out(P).view({P, P - 1})[slot];
  const auto rest = flat.index_select(1, kept).flatten(1);
  const auto pos = one_hot_rows(P, z_o.options())[slot].expand({z_o.size(0), P});
  return rule_softmax(pred_context(torch::cat({rest, pos}, 1)), log_out);
}

torch::Tensor GenVPImpl::predict_partial_rows(const torch::Tensor& z_o, int k,
                                              torch::Tensor* log_out) {
  if (k < 0 || k >= dims_.rows) throw ContractError("partial-rows index out of range");
  const int M = dims_.rows;
  const auto kept = leave_one_out(M).view({M, M - 1})[k];
  const auto rest = z_o.index_select(1, kept).flatten(1);
  const auto pos = one_hot_rows(M, z_o.options())[k].expand({z_o.size(0), M});
  return rule_softmax(pred_prows(torch::cat({rest, pos}, 1)), log_out);
}

torch::Tensor GenVPImpl::predict_rows(const torch::Tensor& z_r, torch::Tensor* log_out) {
  return rule_softmax(pred_rows(z_r.flatten(1)), log_out);
}

ViewPredictions GenVPImpl::predict_all(const torch::Tensor& z_o, const torch::Tensor& z_r) {
  const auto B = z_o.size(0);
  const int P = dims_.panels();
  const int M = dims_.rows;
  const int Ko = dims_.object;
  ViewPredictions v;
  v.full = predict_full(z_o, &v.log_full);
  v.rows = predict_rows(z_r, &v.log_rows);

  const auto flat = z_o.reshape({B, P, Ko});
  const auto ctx_in = torch::cat(
      {flat.index_select(1, leave_one_out(P)).reshape({B, P, (P - 1) * Ko}),
       one_hot_rows(P, z_o.options()).unsqueeze(0).expand({B, P, P})},
      2);
  v.context = rule_softmax(pred_context(ctx_in), &v.log_context);

  const auto prow_in = torch::cat(
      {z_o.index_select(1, leave_one_out(M)).reshape({B, M, (M - 1) * dims_.cols * Ko}),
       one_hot_rows(M, z_o.options()).unsqueeze(0).expand({B, M, M})},
      2);
  v.prows = rule_softmax(pred_prows(prow_in), &v.log_prows);
  return v;
}

torch::Tensor GenVPImpl::moe(const ViewPredictions& v, MixtureKind kind) {
  switch (kind) {
    case MixtureKind::kWeightedAvg:
      return 0.25 * (v.full + v.context.mean(1) + v.prows.mean(1) + v.rows);
    case MixtureKind::kAvg:
      return v.stacked().mean(1);
    case MixtureKind::kArgmaxAvg:
      return argmax_one_hot(v.stacked().mean(1));
    case MixtureKind::kProd:
    case MixtureKind::kArgmaxProd: {
      const auto logs =
          torch::cat({v.log_full.unsqueeze(1), v.log_context, v.log_prows, v.log_rows.unsqueeze(1)},
                     1);
      const auto p = torch::softmax(logs.sum(1), -1);
      return kind == MixtureKind::kProd ? p : argmax_one_hot(p);
    }
    case MixtureKind::kLearned:
      if (!mixer_trained_) throw ContractError("learned mixture needs a trained mixer");
      return mixer(v.stacked());
  }
  throw ContractError("unknown mixture kind");
}

std::pair<torch::Tensor, torch::Tensor> split_latent(const torch::Tensor& z, int object_dim) {
  const auto K = z.size(-1);
  if (object_dim < 0 || object_dim > K) throw ContractError("split point outside the latent");
  return {z.index({"...", Slice(0, object_dim)}), z.index({"...", Slice(object_dim, K)})};
}

at::Generator make_generator(std::uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

torch::Tensor sample_gaussian(const Gaussian& g, at::Generator& generator) {
  const auto eps = torch::randn(g.mean.sizes(), generator, g.mean.options());
  return g.mean + torch::exp(0.5 * g.logvar) * eps;
}

torch::Tensor sample_gaussian(const Gaussian& g, std::uint64_t seed) {
  auto gen = make_generator(seed);
  return sample_gaussian(g, gen);
}

Gaussian compose_panel_latent(const torch::Tensor& z_o, const torch::Tensor& z_obar,
                              const torch::Tensor& object_logvar) {
  return {torch::cat({z_o, z_obar}, -1),
          torch::cat({object_logvar, torch::zeros_like(z_obar)}, -1)};
}

torch::Tensor rules_to_tensor(const std::vector<const RuleMatrix*>& rules,
                              torch::ScalarType dtype) {
  if (rules.empty()) return torch::zeros({0, 0, kRuleCols}, dtype);
  const auto K = rules.front()->rows();
  auto out = torch::zeros({static_cast<std::int64_t>(rules.size()), K, kRuleCols}, torch::kDouble);
  auto acc = out.accessor<double, 3>();
  for (std::size_t b = 0; b < rules.size(); ++b) {
    if (rules[b]->rows() != K) throw ContractError("rule matrices differ in row count");
    for (int k = 0; k < K; ++k) acc[static_cast<long>(b)][k][static_cast<int>(rules[b]->kind(k))] = 1;
  }
  return out.to(dtype);
}

torch::Tensor panels_to_tensor(const std::vector<const RasterPanel*>& panels,
                               torch::ScalarType dtype) {
  if (panels.empty()) return torch::zeros({0, 1, 0, 0}, dtype);
  const int H = panels.front()->height;
  const int W = panels.front()->width;
  auto out = torch::empty({static_cast<std::int64_t>(panels.size()), 1, H, W}, torch::kUInt8);
  auto* dst = out.data_ptr<std::uint8_t>();
  for (std::size_t i = 0; i < panels.size(); ++i) {
    if (panels[i]->height != H || panels[i]->width != W) {
      throw ContractError("panels differ in size");
    }
    std::memcpy(dst + i * static_cast<std::size_t>(H * W), panels[i]->pixels.data(),
                static_cast<std::size_t>(H * W));
  }
  return out.to(dtype) / 255.0;
}

RasterPanel tensor_to_panel(const torch::Tensor& image) {
  const auto img = image.detach().to(torch::kDouble).reshape({image.size(-2), image.size(-1)});
  RasterPanel p(static_cast<int>(img.size(0)), static_cast<int>(img.size(1)));
  const auto q = (img.clamp(0, 1) * 255.0).round().to(torch::kUInt8).contiguous();
  std::memcpy(p.pixels.data(), q.data_ptr<std::uint8_t>(), p.pixels.size());
  return p;
}

torch::Tensor generate_from_rules(GenVPImpl& model, const torch::Tensor& rules,
                                  std::uint64_t seed, double temperature) {
  torch::NoGradGuard guard;
  const auto& d = model.dims();
  auto gen = make_generator(seed);
  const auto scaled = [&](const Gaussian& g) {
    return Gaussian{g.mean, g.logvar + 2.0 * std::log(std::max(temperature, 1e-12))};
  };
  const auto z_r = sample_gaussian(scaled(model.decode_rules(rules)), gen);
  const auto z_o = sample_gaussian(scaled(model.decode_row_latent(z_r)), gen);
  const auto z_obar = torch::randn({z_o.size(0), d.rows, d.cols, d.context_latent()}, gen,
                                   z_o.options());
  const auto z = compose_panel_latent(z_o, z_obar, torch::zeros_like(z_o)).mean;
  return model.decode_image(z).view({rules.size(0), d.panels(), 1, d.height, d.width});
}

torch::Tensor propose_solutions(GenVPImpl& model, const torch::Tensor& context, int n,
                                std::uint64_t seed) {
  if (n < 1) throw ContractError("propose_solutions needs n >= 1");
  const auto& d = model.dims();
  const int P = d.panels();
  if (context.dim() != 4 || context.size(0) != P - 1) {
    throw ContractError("context must hold MN-1 panels");
  }
  torch::NoGradGuard guard;
  auto gen = make_generator(seed);
  const auto mu = model.encode_image(context).mean;
  const auto z_o_ctx = split_latent(mu, d.object).first;  // [P-1, K_o]

  // Impute the missing latent: context-view rule guess -> row prior means.
  auto grid = torch::cat({z_o_ctx, torch::zeros({1, d.object}, z_o_ctx.options())}, 0)
                  .view({1, d.rows, d.cols, d.object});
  const auto ctx_rules = model.predict_context(grid, d.rows - 1, d.cols - 1);
  const auto r_hat = torch::one_hot(ctx_rules.argmax(-1), kRuleCols).to(mu.options());
  const auto prior_zr = model.decode_rules(r_hat).mean;
  const auto imputed = model.decode_row_latent(prior_zr).mean[0][d.rows - 1][d.cols - 1];
  grid = torch::cat({z_o_ctx, imputed.unsqueeze(0)}, 0).view({1, d.rows, d.cols, d.object});

  // One refinement pass through the row posterior, then sample completions.
  const auto post = model.encode_rows(grid);
  const auto last = Gaussian{post.mean.expand({n, d.rows, d.row}),
                             post.logvar.expand({n, d.rows, d.row})};
  const auto z_r = sample_gaussian(last, gen);
  const auto z_o = sample_gaussian(model.decode_row_latent(z_r), gen)
                       .index({Slice(), d.rows - 1, d.cols - 1});  // [n, K_o]
  const auto z_obar = torch::randn({n, d.context_latent()}, gen, z_o.options());
  return model.decode_image(torch::cat({z_o, z_obar}, -1));
}

namespace {

constexpr char kMagic[8] = {'G', 'E', 'N', 'V', 'P', 'C', 'K', 'P'};

std::string dtype_name(torch::ScalarType t) {
  if (t == torch::kFloat) return "float32";
  if (t == torch::kDouble) return "float64";
  if (t == torch::kLong) return "int64";
  throw IoError("checkpoint cannot store tensors of this dtype");
}

torch::ScalarType dtype_from(const std::string& s) {
  if (s == "float32") return torch::kFloat;
  if (s == "float64") return torch::kDouble;
  if (s == "int64") return torch::kLong;
  throw IoError("unknown tensor dtype '" + s + "' in checkpoint");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, GenVPImpl& model,
                     const CheckpointExtra& extra) {
  static_assert(std::endian::native == std::endian::little, "checkpoints are little-endian");
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  for (const auto& p : model.named_parameters()) tensors.emplace_back(p.key(), p.value());
  for (const auto& t : extra.tensors) tensors.push_back(t);

  nlohmann::json header = extra.header;
  header["format_version"] = kCheckpointVersion;
  header["dims"] = model.dims().to_json();
  header["mixer_trained"] = model.mixer_trained();
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    list.push_back({{"name", name}, {"shape", t.sizes().vec()}, {"dtype", dtype_name(t.scalar_type())}});
  }
  header["tensors"] = list;
  const std::string h = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = h.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [name, t] : tensors) {
      const auto c = t.detach().contiguous().cpu();
      out.write(static_cast<const char*>(c.data_ptr()),
                static_cast<std::streamsize>(c.numel() * c.element_size()));
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

std::pair<GenVP, CheckpointExtra> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  std::string h(len, '\0');
  in.read(h.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint header");
  CheckpointExtra extra;
  try {
    extra.header = nlohmann::json::parse(h);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint header: ") + e.what());
  }
  GenVP model(ModelDims::from_json(extra.header.at("dims")));
  model->set_mixer_trained(extra.header.value("mixer_trained", false));
  auto params = model->named_parameters();
  torch::NoGradGuard guard;
  bool converted = false;
  for (const auto& entry : extra.header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto dtype = dtype_from(entry.at("dtype").get<std::string>());
    auto t = torch::empty(shape, dtype);
    in.read(static_cast<char*>(t.data_ptr()),
            static_cast<std::streamsize>(t.numel() * t.element_size()));
    if (!in) throw IoError("truncated checkpoint payload at '" + name + "'");
    if (auto* p = params.find(name)) {
      if (!converted && p->scalar_type() != dtype) {
        model->to(dtype);
        params = model->named_parameters();
        p = params.find(name);
        converted = true;
      }
      if (p->sizes() != t.sizes()) throw IoError("shape mismatch for '" + name + "'");
      p->copy_(t);
    } else {
      extra.tensors.emplace_back(name, t);
    }
  }
  for (const char* key : {"format_version", "dims", "mixer_trained", "tensors"}) {
    extra.header.erase(key);
  }
  return {model, extra};
}

}  // namespace genvp
