#pragma once

#include <cmath>

#include "fpgap/backends.hpp"
#include "fpgap/rng.hpp"

namespace fpgap {

/// Synthetic class-structured images: horizontal bars (class 0), vertical
/// bars (class 1), and diagonal bands (class 2 when k = 3), with per-image
/// intensity and background noise. Deterministic per seed; each image draws
/// from its own derived stream so generation order never matters.
struct ToyDataset {
  Shape shape;
  int classes = 2;
  std::uint32_t seed = 0;
  std::vector<ImageF> images;
  std::vector<int> labels;
  int train_count = 0;

  int test_count() const { return int(images.size()) - train_count; }
  const ImageF& test_image(int i) const { return images[size_t(train_count + i)]; }
  int test_label(int i) const { return labels[size_t(train_count + i)]; }
};

inline ToyDataset gen_dataset(std::uint32_t seed, int size, int k = 2, Shape shape = {8, 8, 1}) {
  require(size >= 1, "gen_dataset: size must be >= 1");
  require(k == 2 || k == 3, "gen_dataset: k must be 2 or 3");
  ToyDataset ds;
  ds.shape = shape;
  ds.classes = k;
  ds.seed = seed;
  ds.train_count = size * 4 / 5;
  for (int idx = 0; idx < size; ++idx) {
    Rng rng(Rng::derive(seed, std::uint64_t(idx)));
    int label = idx % k;
    ImageF img(shape);
    for (int i = 0; i < img.size(); ++i) img[i] = float(0.12 * rng.uniform01());
    int pos = 1 + int(rng.uniform_int(std::uint32_t(shape.h - 3)));
    double base = 0.55 + 0.35 * rng.uniform01();
    auto paint = [&](int y, int x) {
      for (int c = 0; c < shape.c; ++c) {
        double v = base + 0.08 * (rng.uniform01() - 0.5);
        img(y, x, c) = float(std::min(std::max(v, 0.0), 1.0));
      }
    };
    if (label == 0) {
      for (int y = pos; y < pos + 2; ++y)
        for (int x = 0; x < shape.w; ++x) paint(y, x);
    } else if (label == 1) {
      for (int x = pos; x < pos + 2; ++x)
        for (int y = 0; y < shape.h; ++y) paint(y, x);
    } else {
      for (int y = 0; y < shape.h; ++y)
        for (int x = 0; x < shape.w; ++x)
          if (std::abs(y - x) <= 1) paint(y, x);
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

/// conv(3x3) blocks each followed by ReLU, then flatten and one dense
/// classifier head.
struct ArchSpec {
  Shape input{8, 8, 1};
  struct ConvSpec {
    int out_ch = 4;
    int k = 3;
    int pad = 0;
  };
  std::vector<ConvSpec> convs;
  int classes = 2;
};

struct PgdConfig {
  bool enabled = false;
  double eps = 0.08;
  int steps = 5;
  double step_size = 0.03;
};

struct TrainConfig {
  std::uint32_t seed = 1;
  int epochs = 10;
  double lr = 0.05;
  int batch = 16;
  PgdConfig pgd;
};

namespace train_detail {

// double-precision mirror of the network used during optimization
struct DLayer {
  bool is_conv = false;
  int out_ch = 0, in_ch = 0, k = 0, pad = 0;  // conv
  int rows = 0, cols = 0;                     // dense
  std::vector<double> w, b;
};

struct DNet {
  Shape input;
  int classes = 2;
  std::vector<DLayer> layers;  // conv blocks then dense; ReLU after each conv
};

inline DNet init_dnet(const ArchSpec& arch, Rng& rng) {
  require(arch.classes >= 2, "train: need at least two classes");
  DNet net;
  net.input = arch.input;
  net.classes = arch.classes;
  Shape s = arch.input;
  for (const auto& cv : arch.convs) {
    DLayer l;
    l.is_conv = true;
    l.out_ch = cv.out_ch;
    l.in_ch = s.c;
    l.k = cv.k;
    l.pad = cv.pad;
    int fan_in = l.in_ch * l.k * l.k;
    double sd = std::sqrt(2.0 / double(fan_in));
    l.w.resize(size_t(l.out_ch) * l.in_ch * l.k * l.k);
    for (double& v : l.w) v = rng.normal(0, sd);
    l.b.assign(size_t(l.out_ch), 0.0);
    s = Shape{s.h + 2 * cv.pad - cv.k + 1, s.w + 2 * cv.pad - cv.k + 1, cv.out_ch};
    require(s.h > 0 && s.w > 0, "train: conv stack shrinks input away");
    net.layers.push_back(std::move(l));
  }
  DLayer d;
  d.rows = arch.classes;
  d.cols = s.size();
  double sd = std::sqrt(2.0 / double(d.cols));
  d.w.resize(size_t(d.rows) * d.cols);
  for (double& v : d.w) v = rng.normal(0, sd);
  d.b.assign(size_t(d.rows), 0.0);
  net.layers.push_back(std::move(d));
  return net;
}

struct Trace {
  // per conv block: pre-activation z and input a; final dense input
  std::vector<std::vector<double>> inputs;  // activation entering each layer
  std::vector<std::vector<double>> pre;     // conv pre-activations
  std::vector<double> logits;
  std::vector<Shape> shapes;  // shape entering each layer
};

inline void conv_forward(const DLayer& l, const std::vector<double>& in, const Shape& s,
                         std::vector<double>& out, Shape& os) {
  os = Shape{s.h + 2 * l.pad - l.k + 1, s.w + 2 * l.pad - l.k + 1, l.out_ch};
  out.assign(size_t(os.size()), 0.0);
  for (int oy = 0; oy < os.h; ++oy)
    for (int ox = 0; ox < os.w; ++ox)
      for (int oc = 0; oc < l.out_ch; ++oc) {
        double acc = l.b[oc];
        for (int ic = 0; ic < l.in_ch; ++ic)
          for (int ky = 0; ky < l.k; ++ky)
            for (int kx = 0; kx < l.k; ++kx) {
              int iy = oy + ky - l.pad, ix = ox + kx - l.pad;
              if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
              acc += l.w[((size_t(oc) * l.in_ch + ic) * l.k + ky) * l.k + kx] *
                     in[(size_t(iy) * s.w + ix) * s.c + ic];
            }
        out[(size_t(oy) * os.w + ox) * os.c + oc] = acc;
      }
}

inline Trace forward(const DNet& net, const std::vector<double>& x) {
  Trace tr;
  std::vector<double> act = x;
  Shape s = net.input;
  for (const DLayer& l : net.layers) {
    tr.inputs.push_back(act);
    tr.shapes.push_back(s);
    if (l.is_conv) {
      Shape os;
      std::vector<double> z;
      conv_forward(l, act, s, z, os);
      tr.pre.push_back(z);
      for (double& v : z) v = v > 0 ? v : 0;
      act = std::move(z);
      s = os;
    } else {
      std::vector<double> y(size_t(l.rows), 0.0);
      for (int r = 0; r < l.rows; ++r) {
        double acc = l.b[r];
        for (int j = 0; j < l.cols; ++j) acc += l.w[size_t(r) * l.cols + j] * act[j];
        y[r] = acc;
      }
      tr.logits = std::move(y);
    }
  }
  return tr;
}

inline double softmax_ce(const std::vector<double>& logits, int label,
                         std::vector<double>& dlogits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0;
  for (double v : logits) z += std::exp(v - m);
  double loss = -(logits[size_t(label)] - m - std::log(z));
  dlogits.resize(logits.size());
  for (size_t i = 0; i < logits.size(); ++i)
    dlogits[i] = std::exp(logits[i] - m) / z - (int(i) == label ? 1.0 : 0.0);
  return loss;
}

struct Grads {
  std::vector<std::vector<double>> w, b;
  std::vector<double> input;
};

inline double loss_and_grads(const DNet& net, const std::vector<double>& x, int label,
                             Grads& g) {
  Trace tr = forward(net, x);
  std::vector<double> dlogits;
  double loss = softmax_ce(tr.logits, label, dlogits);
  g.w.assign(net.layers.size(), {});
  g.b.assign(net.layers.size(), {});
  std::vector<double> grad = dlogits;  // gradient wrt current layer output
  for (int li = int(net.layers.size()) - 1; li >= 0; --li) {
    const DLayer& l = net.layers[li];
    const std::vector<double>& in = tr.inputs[size_t(li)];
    const Shape& s = tr.shapes[size_t(li)];
    if (!l.is_conv) {
      g.w[li].assign(l.w.size(), 0.0);
      g.b[li] = grad;
      std::vector<double> dx(size_t(l.cols), 0.0);
      for (int r = 0; r < l.rows; ++r)
        for (int j = 0; j < l.cols; ++j) {
          g.w[li][size_t(r) * l.cols + j] += grad[r] * in[j];
          dx[j] += l.w[size_t(r) * l.cols + j] * grad[r];
        }
      grad = std::move(dx);
    } else {
      // ReLU first (grad arrives post-activation)
      const std::vector<double>& z = tr.pre[size_t(li)];
      Shape os{s.h + 2 * l.pad - l.k + 1, s.w + 2 * l.pad - l.k + 1, l.out_ch};
      std::vector<double> dz = grad;
      for (size_t i = 0; i < dz.size(); ++i)
        if (z[i] <= 0) dz[i] = 0;
      g.w[li].assign(l.w.size(), 0.0);
      g.b[li].assign(l.b.size(), 0.0);
      std::vector<double> dx(size_t(s.size()), 0.0);
      for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox)
          for (int oc = 0; oc < l.out_ch; ++oc) {
            double go = dz[(size_t(oy) * os.w + ox) * os.c + oc];
            if (go == 0) continue;
            g.b[li][oc] += go;
            for (int ic = 0; ic < l.in_ch; ++ic)
              for (int ky = 0; ky < l.k; ++ky)
                for (int kx = 0; kx < l.k; ++kx) {
                  int iy = oy + ky - l.pad, ix = ox + kx - l.pad;
                  if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                  size_t wi = ((size_t(oc) * l.in_ch + ic) * l.k + ky) * l.k + kx;
                  size_t xi = (size_t(iy) * s.w + ix) * s.c + ic;
                  g.w[li][wi] += go * in[xi];
                  dx[xi] += l.w[wi] * go;
                }
          }
      grad = std::move(dx);
    }
  }
  g.input = std::move(grad);
  return loss;
}

inline std::vector<double> to_doubles(const ImageF& x) {
  std::vector<double> out(size_t(x.size()));
  for (int i = 0; i < x.size(); ++i) out[i] = widen(x[i]);
  return out;
}

inline Network to_network(const DNet& net) {
  Network out;
  out.input = net.input;
  for (const DLayer& l : net.layers) {
    if (l.is_conv) {
      Conv2d cv;
      cv.out_ch = l.out_ch;
      cv.in_ch = l.in_ch;
      cv.kh = cv.kw = l.k;
      cv.pad = l.pad;
      for (double v : l.w) cv.weights.push_back(to_single(v));
      for (double v : l.b) cv.bias.push_back(to_single(v));
      out.layers.emplace_back(std::move(cv));
      out.layers.emplace_back(ReLU{});
    } else {
      out.layers.emplace_back(Flatten{});
      Dense d;
      d.rows = l.rows;
      d.cols = l.cols;
      for (double v : l.w) d.weights.push_back(to_single(v));
      for (double v : l.b) d.bias.push_back(to_single(v));
      out.layers.emplace_back(std::move(d));
    }
  }
  return out;
}

}  // namespace train_detail

/// Plain SGD on softmax cross-entropy in double precision, optional PGD
/// inner loop (l-inf ball, sign-gradient steps), weights rounded to single
/// at the end. Deterministic for a fixed (seed, config).
inline Network train(const ArchSpec& arch, const ToyDataset& data, const TrainConfig& cfg) {
  using namespace train_detail;
  require(cfg.epochs >= 0 && cfg.lr > 0 && cfg.batch >= 1, "train: bad config");
  require(arch.classes == data.classes, "train: class count mismatch");
  require(arch.input == data.shape, "train: input shape mismatch");
  Rng rng(cfg.seed);
  DNet net = init_dnet(arch, rng);

  std::vector<int> order(size_t(data.train_count));
  for (int i = 0; i < data.train_count; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates shuffle from the run's stream
    for (int i = data.train_count - 1; i > 0; --i) {
      int j = int(rng.uniform_int(std::uint32_t(i + 1)));
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    for (int start = 0; start < data.train_count; start += cfg.batch) {
      int end = std::min(start + cfg.batch, data.train_count);
      Grads acc;
      bool first = true;
      for (int bi = start; bi < end; ++bi) {
        int idx = order[size_t(bi)];
        std::vector<double> x = to_doubles(data.images[size_t(idx)]);
        int label = data.labels[size_t(idx)];
        if (cfg.pgd.enabled) {
          std::vector<double> x_adv = x;
          for (int s = 0; s < cfg.pgd.steps; ++s) {
            Grads g;
            loss_and_grads(net, x_adv, label, g);
            for (size_t i = 0; i < x_adv.size(); ++i) {
              double step = cfg.pgd.step_size * (g.input[i] > 0 ? 1.0 : (g.input[i] < 0 ? -1.0 : 0.0));
              double v = x_adv[i] + step;
              v = std::min(v, x[i] + cfg.pgd.eps);
              v = std::max(v, x[i] - cfg.pgd.eps);
              x_adv[i] = std::min(std::max(v, 0.0), 1.0);
            }
          }
          x = std::move(x_adv);
        }
        Grads g;
        epoch_loss += loss_and_grads(net, x, label, g);
        if (first) {
          acc = std::move(g);
          first = false;
        } else {
          for (size_t li = 0; li < net.layers.size(); ++li) {
            for (size_t i = 0; i < acc.w[li].size(); ++i) acc.w[li][i] += g.w[li][i];
            for (size_t i = 0; i < acc.b[li].size(); ++i) acc.b[li][i] += g.b[li][i];
          }
        }
      }
      double scale = cfg.lr / double(end - start);
      for (size_t li = 0; li < net.layers.size(); ++li) {
        for (size_t i = 0; i < net.layers[li].w.size(); ++i)
          net.layers[li].w[i] -= scale * acc.w[li][i];
        for (size_t i = 0; i < net.layers[li].b.size(); ++i)
          net.layers[li].b[i] -= scale * acc.b[li][i];
      }
    }
    if (!std::isfinite(epoch_loss)) throw NumericalError("train: loss diverged");
  }
  Network out = train_detail::to_network(net);
  out.validate();
  return out;
}

/// Classification accuracy over a dataset split with the given backend.
inline double accuracy(const Network& net, const ToyDataset& data, bool test_split,
                       BackendId backend = BackendId::DIRECT_F32) {
  int n = test_split ? data.test_count() : data.train_count;
  require(n > 0, "accuracy: empty split");
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const ImageF& x = test_split ? data.test_image(i) : data.images[size_t(i)];
    int label = test_split ? data.test_label(i) : data.labels[size_t(i)];
    Logits<double> y = infer_as_double(backend, net, x);
    if (argmax_class(y) == label) ++correct;
  }
  return double(correct) / double(n);
}

}  // namespace fpgap
