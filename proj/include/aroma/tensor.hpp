#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "aroma/error.hpp"
#include "aroma/rng.hpp"

namespace aroma {

class TensorError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public TensorError {
 public:
  using TensorError::TensorError;
};

class Tape;

// Dense row-major float-64 matrix with an optional gradient buffer.
// All tensors are rank 2; scalars are [1 x 1]. Copies share storage.
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<Impl>()) {}
  static Tensor zeros(int64_t rows, int64_t cols);
  static Tensor full(int64_t rows, int64_t cols, double value);
  static Tensor from(std::vector<double> values, int64_t rows, int64_t cols);
  static Tensor scalar(double value);
  // Leaf with requires_grad set; the unit of learnable state.
  static Tensor param(std::vector<double> values, int64_t rows, int64_t cols);

  int64_t rows() const { return impl_->rows; }
  int64_t cols() const { return impl_->cols; }
  int64_t numel() const { return impl_->rows * impl_->cols; }

  double at(int64_t r, int64_t c) const { return impl_->data[r * cols() + c]; }
  double& at(int64_t r, int64_t c) { return impl_->data[r * cols() + c]; }
  double item() const;

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  bool same_storage(const Tensor& o) const { return impl_ == o.impl_; }

 private:
  friend class Tape;
  struct Impl {
    int64_t rows = 0, cols = 0;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Records one forward pass for reverse-mode differentiation. Single
// threaded by contract; run independent tapes for parallel replicas.
//
// Op shape table (R = rows, C = cols):
//   matmul(a[R,K], b[K,C], ta, tb)      -> [R,C], flags transpose inputs
//   add/mul: same shape, or [1,C]+[R,C] row broadcast, or [1,1] scalar
//   concat(a, b, axis)                  axis 0: columns match; 1: rows match
//   slice(x, axis, start, len)          contiguous range along axis
//   gather_rows(x[N,C], idx[M])         -> [M,C]
//   scatter_add_rows(x[M,C], idx, N)    -> [N,C], rows summed per target
//   relu/sigmoid/tanh_/softmax_rows     elementwise / per row; NaN propagates
//   mean_rows/sum_rows(x[N,C])          -> [1,C]
//   sum_all(x)                          -> [1,1]
//   broadcast(x, R, C)                  [1,C] -> [R,C] or [1,1] -> [R,C]
//   reshape(x, R, C)                    same numel
//   edge_matvec(m[E,D*D], v[E,D])       -> [E,D], per-row matrix-vector
//   bce_with_logits(z, y, w)            -> [1,1], log-space form, summed;
//                                          w empty = unit label weights
class Tape {
 public:
  Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
                bool transpose_b = false);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor concat(const Tensor& a, const Tensor& b, int axis);
  Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len);
  Tensor gather_rows(const Tensor& x, const std::vector<int32_t>& indices);
  Tensor scatter_add_rows(const Tensor& x, const std::vector<int32_t>& indices,
                          int64_t out_rows);
  Tensor relu(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  Tensor tanh_(const Tensor& x);
  Tensor softmax_rows(const Tensor& x);
  Tensor mean_rows(const Tensor& x);
  Tensor sum_rows(const Tensor& x);
  Tensor sum_all(const Tensor& x);
  Tensor broadcast(const Tensor& x, int64_t rows, int64_t cols);
  Tensor reshape(const Tensor& x, int64_t rows, int64_t cols);
  Tensor edge_matvec(const Tensor& mats, const Tensor& vecs);
  Tensor bce_with_logits(const Tensor& logits, const Tensor& targets,
                         const std::vector<double>& label_weights = {});

  // Seeds grad(loss) with 1 and walks the tape backwards, accumulating
  // into every requires_grad leaf. One backward per recording.
  void backward(const Tensor& loss);

  void clear();
  size_t size() const { return nodes_.size(); }

 private:
  Tensor make_output(int64_t rows, int64_t cols,
                     std::initializer_list<const Tensor*> inputs);
  void record(std::function<void()> fn);

  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

// Adam with bias correction. Weight decay enters as an L2 term added to
// the gradient before the moment updates.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;
  int64_t step = 0;
};

void adam_step(std::vector<Tensor>& params, AdamState& state,
               const AdamConfig& cfg);

// Two schedule families:
//   ExponentialSteps: lr0 * rate^(step / decay_steps), continuous exponent.
//   FractionalSpan:   geometric decay reaching lr0 * decay at 90% of the
//                     epoch budget, constant afterwards.
struct ScheduleConfig {
  enum class Kind { Constant, ExponentialSteps, FractionalSpan } kind = Kind::Constant;
  double lr0 = 1e-3;
  double rate = 0.5;        // ExponentialSteps
  double decay_steps = 1;   // ExponentialSteps
  double decay = 0.08;      // FractionalSpan
  double total_epochs = 1;  // FractionalSpan
};

double lr_at(const ScheduleConfig& cfg, double step_or_epoch);

// Checkpoint: versioned binary {magic, version, tensor_count} then per
// tensor {name, dtype, rows, cols, raw float-64 data}; a JSON manifest
// mirroring names/shapes is written next to it as <path>.json.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;
void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

}  // namespace aroma
