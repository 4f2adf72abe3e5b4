#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "genvp/render.hpp"
#include "json.hpp"

namespace genvp {

struct ModelDims {
  int height = 32;
  int width = 32;
  int latent = 32;   // K
  int object = 26;   // K_Zo; K_Zō = latent - object
  int row = 96;      // K_Zr
  int hidden = 128;  // perceptron width
  int base_channels = 16;
  int max_channels = 64;
  int rule_rows = 3;  // K_R
  int rows = 3;       // M
  int cols = 3;       // N

  int context_latent() const { return latent - object; }
  int panels() const { return rows * cols; }
  int conv_stages() const;
  void validate() const;
  nlohmann::json to_json() const;
  static ModelDims from_json(const nlohmann::json& j);
};

inline constexpr int kRuleCols = 5;
inline constexpr double kLogVarMin = -8.0;
inline constexpr double kLogVarMax = 8.0;

// Diagonal Gaussian; log-variance clamped to [kLogVarMin, kLogVarMax].
struct Gaussian {
  torch::Tensor mean;
  torch::Tensor logvar;
};

enum class MixtureKind { kWeightedAvg, kAvg, kArgmaxAvg, kProd, kArgmaxProd, kLearned };

std::string_view to_string(MixtureKind kind);
MixtureKind parse_mixture_kind(std::string_view name);

// Row-stochastic predictions of every view, shape [B, ..., K_R, 5].
struct ViewPredictions {
  torch::Tensor full;     // [B, K_R, 5]
  torch::Tensor context;  // [B, MN, K_R, 5], view (k,l) at index k*N + l
  torch::Tensor prows;    // [B, M, K_R, 5]
  torch::Tensor rows;     // [B, K_R, 5]
  // Log-probabilities, same shapes (used by cross-entropy).
  torch::Tensor log_full, log_context, log_prows, log_rows;

  int view_count() const;
  // All views stacked as channels [B, 2 + MN + M, K_R, 5] in the order
  // full, context(0..MN-1), partial-rows(0..M-1), rows.
  torch::Tensor stacked() const;
};

// Names for the stacked channel order, e.g. "full", "ctx-1", "prow-13", "rows".
std::vector<std::string> view_names(int rows, int cols);

// Two-layer perceptron with a SiLU between the layers.
struct MlpImpl : torch::nn::Module {
  MlpImpl(int in, int hidden, int out);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Linear l1{nullptr}, l2{nullptr};
};
TORCH_MODULE(Mlp);

struct ImageEncoderImpl : torch::nn::Module {
  explicit ImageEncoderImpl(const ModelDims& dims);
  Gaussian forward(const torch::Tensor& x);  // [N,1,H,W] -> [N,K]
  torch::nn::Sequential convs{nullptr};
  torch::nn::Linear mean_head{nullptr}, logvar_head{nullptr};
};
TORCH_MODULE(ImageEncoder);

struct ImageDecoderImpl : torch::nn::Module {
  explicit ImageDecoderImpl(const ModelDims& dims);
  torch::Tensor forward(const torch::Tensor& z);  // [N,K] -> [N,1,H,W] in (0,1)
  ModelDims dims;
  int top_channels = 0;
  torch::nn::Linear project{nullptr};
  torch::nn::Sequential deconvs{nullptr};
};
TORCH_MODULE(ImageDecoder);

// Learned mixer over the stacked view channels: logits_j = sum_c w_c p_cj + b_j.
struct MixerImpl : torch::nn::Module {
  explicit MixerImpl(int channels);
  torch::Tensor forward(const torch::Tensor& stacked);  // -> [B, K_R, 5] probabilities
  torch::Tensor weight, bias;
};
TORCH_MODULE(Mixer);

class GenVPImpl : public torch::nn::Module {
 public:
  explicit GenVPImpl(const ModelDims& dims);

  const ModelDims& dims() const { return dims_; }

  // q(z|x); panels [N,1,H,W] with N any multiple. Throws ContractError on a
  // size mismatch.
  Gaussian encode_image(const torch::Tensor& panels);
  torch::Tensor decode_image(const torch::Tensor& z);

  // q(Z_r|Z_o): z_o [B,M,N,K_o] -> [B,M,K_r]; row i sees only row i.
  Gaussian encode_rows(const torch::Tensor& z_o);
  // p(Z_r|R): R [B,K_R,5] -> [B,M,K_r]; one Gaussian shared by all rows.
  Gaussian decode_rules(const torch::Tensor& rules);
  // p(Z_o|Z_r): [B,M,K_r] -> [B,M,N,K_o].
  Gaussian decode_row_latent(const torch::Tensor& z_r);

  // Individual views; z_o [B,M,N,K_o], z_r [B,M,K_r]. Return probabilities;
  // `log_out`, when given, receives log-probabilities.
  torch::Tensor predict_full(const torch::Tensor& z_o, torch::Tensor* log_out = nullptr);
  torch::Tensor predict_context(const torch::Tensor& z_o, int k, int l,
                                torch::Tensor* log_out = nullptr);
  torch::Tensor predict_partial_rows(const torch::Tensor& z_o, int k,
                                     torch::Tensor* log_out = nullptr);
  torch::Tensor predict_rows(const torch::Tensor& z_r, torch::Tensor* log_out = nullptr);
  ViewPredictions predict_all(const torch::Tensor& z_o, const torch::Tensor& z_r);

  // Combines views; argmax kinds return one-hot rows. kLearned requires a
  // trained mixer.
  torch::Tensor moe(const ViewPredictions& views, MixtureKind kind);

  bool mixer_trained() const { return mixer_trained_; }
  void set_mixer_trained(bool v) { mixer_trained_ = v; }

  // Parameter groups, each a disjoint set of sub-networks.
  std::vector<std::pair<std::string, torch::nn::Module*>> groups();

  ImageEncoder encoder{nullptr};
  ImageDecoder decoder{nullptr};
  Mlp row_encoder{nullptr};
  Mlp rule_decoder{nullptr};
  Mlp row_decoder{nullptr};
  Mlp pred_full{nullptr};
  Mlp pred_context{nullptr};
  Mlp pred_prows{nullptr};
  Mlp pred_rows{nullptr};
  Mixer mixer{nullptr};

 private:
  torch::Tensor rule_softmax(const torch::Tensor& logits, torch::Tensor* log_out) const;

  ModelDims dims_;
  bool mixer_trained_ = false;
};
TORCH_MODULE(GenVP);

// Splits the trailing dimension at K_o; concatenating the parts restores z.
std::pair<torch::Tensor, torch::Tensor> split_latent(const torch::Tensor& z, int object_dim);

// mean + exp(logvar/2) * eps with eps drawn from `generator`.
torch::Tensor sample_gaussian(const Gaussian& g, at::Generator& generator);
torch::Tensor sample_gaussian(const Gaussian& g, std::uint64_t seed);

// p(z | z_o, z_ō): mean [z_o; z_ō], variance [σ²_Zo ; 1] (block diagonal).
Gaussian compose_panel_latent(const torch::Tensor& z_o, const torch::Tensor& z_obar,
                              const torch::Tensor& object_logvar);

at::Generator make_generator(std::uint64_t seed);

// Rule matrices as one-hot tensors [B, K_R, 5].
torch::Tensor rules_to_tensor(const std::vector<const RuleMatrix*>& rules,
                              torch::ScalarType dtype = torch::kFloat);
// Panels as [N,1,H,W] with values k/255.
torch::Tensor panels_to_tensor(const std::vector<const RasterPanel*>& panels,
                               torch::ScalarType dtype = torch::kFloat);
RasterPanel tensor_to_panel(const torch::Tensor& image);  // [1,H,W] or [H,W]

// Ancestral sampling R -> Z_r -> Z_o, Z_ō ~ N(0,I) -> Z -> X̂. `rules`
// [B,K_R,5] one-hot; returns [B, MN, 1, H, W]. `temperature` scales the
// prior standard deviations of Z_r and Z_o (1 = the model's own).
torch::Tensor generate_from_rules(GenVPImpl& model, const torch::Tensor& rules,
                                  std::uint64_t seed, double temperature = 1.0);

// Candidates for the missing bottom-right panel of `context` [MN-1,1,H,W].
// Context latents are encoded; the missing latent is imputed from the row
// prior, the row posterior recomputed once, then n completions sampled.
torch::Tensor propose_solutions(GenVPImpl& model, const torch::Tensor& context, int n,
                                std::uint64_t seed);

// Binary checkpoint: "GENVPCKP", u32 version, u64 header length, JSON
// header, then every tensor's raw little-endian payload in header order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointExtra {
  nlohmann::json header;  // free-form metadata merged into the header
  std::vector<std::pair<std::string, torch::Tensor>> tensors;  // e.g. optimizer moments
};

void save_checkpoint(const std::filesystem::path& path, GenVPImpl& model,
                     const CheckpointExtra& extra);
// Returns the model plus the extra header/tensors that were stored.
std::pair<GenVP, CheckpointExtra> load_checkpoint(const std::filesystem::path& path);

}  // namespace genvp
