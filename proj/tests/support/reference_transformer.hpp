// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

// Plain-loop forward pass used as a test oracle. Shares no code with the
// library beyond reading parameter tensors by name.

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "confbt/model/config.hpp"
#include "confbt/model/params.hpp"

namespace confbt::testing {

using Mat = std::vector<std::vector<double>>;

class ReferenceTransformer {
 public:
  ReferenceTransformer(const ModelConfig& c, const TransformerParams& p) : c_(c) {
    for (std::size_t k = 0; k < p.names.size(); ++k) {
      const Tensor& t = p.tensors[k];
      Mat m(t.rows(), std::vector<double>(t.cols()));
      for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
      w_[p.names[k]] = std::move(m);
    }
  }

  /// Log-probability matrix for target positions (tgt followed by </s>),
  /// optionally with source confidences applied at the configured sites.
  Mat Forward(const std::vector<int>& src, const std::vector<int>& tgt,
              const std::vector<double>* conf = nullptr) const {
    std::vector<int> s = src;
    s.push_back(2);
    Mat x = Embed("src_embedding", s);
    const bool enc_c = conf && c_.confidence_sites != ConfidenceSites::kCross;
    const bool cross_c = conf && c_.confidence_sites != ConfidenceSites::kEncoderSelf;
    for (std::size_t l = 0; l < c_.layers; ++l) {
      const std::string p = "encoder." + std::to_string(l);
      Mat h = Norm(x, p + ".self_norm");
      x = AddM(x, Mha(h, h, p + ".self_attn", enc_c ? conf : nullptr, false));
      h = Norm(x, p + ".ffn_norm");
      x = AddM(x, Ffn(h, p + ".ffn"));
    }
    const Mat mem = Norm(x, "encoder.norm");
    std::vector<int> in{1};
    in.insert(in.end(), tgt.begin(), tgt.end());
    Mat y = Embed("tgt_embedding", in);
    for (std::size_t l = 0; l < c_.layers; ++l) {
      const std::string p = "decoder." + std::to_string(l);
      Mat h = Norm(y, p + ".self_norm");
      y = AddM(y, Mha(h, h, p + ".self_attn", nullptr, true));
      h = Norm(y, p + ".cross_norm");
      y = AddM(y, Mha(h, mem, p + ".cross_attn", cross_c ? conf : nullptr, false));
      h = Norm(y, p + ".ffn_norm");
      y = AddM(y, Ffn(h, p + ".ffn"));
    }
    y = Norm(y, "decoder.norm");
    Mat logits;
    if (c_.share_target_embedding) {
      logits = MulM(y, Transpose(w_.at("tgt_embedding")));
    } else {
      logits = MulM(y, w_.at("out_weight"));
    }
    logits = AddBias(logits, w_.at("out_bias")[0]);
    for (auto& row : logits) {
      double mx = row[0];
      for (double v : row) mx = std::max(mx, v);
      double z = 0.0;
      for (double v : row) z += std::exp(v - mx);
      for (double& v : row) v = v - mx - std::log(z);
    }
    return logits;
  }

 private:
  Mat Embed(const std::string& table, const std::vector<int>& ids) const {
    const std::size_t d = c_.d_model;
    Mat out(ids.size(), std::vector<double>(d));
    for (std::size_t pos = 0; pos < ids.size(); ++pos) {
      for (std::size_t i = 0; i < d; ++i) {
        const std::size_t even = i - i % 2;
        const double angle = static_cast<double>(pos) / std::pow(10000.0, double(even) / double(d));
        const double pe = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
        out[pos][i] = w_.at(table)[static_cast<std::size_t>(ids[pos])][i] * std::sqrt(double(d)) + pe;
      }
    }
    return out;
  }

  static Mat MulM(const Mat& a, const Mat& b) {
    Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b[0].size(); ++j)
        for (std::size_t k = 0; k < b.size(); ++k) out[i][j] += a[i][k] * b[k][j];
    return out;
  }
  static Mat Transpose(const Mat& a) {
    Mat out(a[0].size(), std::vector<double>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a[0].size(); ++j) out[j][i] = a[i][j];
    return out;
  }
  static Mat AddM(Mat a, const Mat& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
    return a;
  }
  static Mat AddBias(Mat a, const std::vector<double>& b) {
    for (auto& row : a)
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
    return a;
  }

  Mat Norm(const Mat& x, const std::string& p) const {
    const auto& g = w_.at(p + ".gain")[0];
    const auto& b = w_.at(p + ".bias")[0];
    Mat out = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double n = static_cast<double>(x[i].size());
      double mean = 0.0, var = 0.0;
      for (double v : x[i]) mean += v / n;
      for (double v : x[i]) var += (v - mean) * (v - mean) / n;
      for (std::size_t j = 0; j < x[i].size(); ++j)
        out[i][j] = (x[i][j] - mean) / std::sqrt(var + 1e-6) * g[j] + b[j];
    }
    return out;
  }

  Mat Ffn(const Mat& x, const std::string& p) const {
    Mat h = AddBias(MulM(x, w_.at(p + ".w1")), w_.at(p + ".b1")[0]);
    for (auto& row : h)
      for (double& v : row) v = v > 0.0 ? v : 0.0;
    return AddBias(MulM(h, w_.at(p + ".w2")), w_.at(p + ".b2")[0]);
  }

  Mat Mha(const Mat& qin, const Mat& kvin, const std::string& p, const std::vector<double>* conf,
          bool causal) const {
    const Mat q = AddBias(MulM(qin, w_.at(p + ".wq")), w_.at(p + ".bq")[0]);
    const Mat k = AddBias(MulM(kvin, w_.at(p + ".wk")), w_.at(p + ".bk")[0]);
    const Mat v = AddBias(MulM(kvin, w_.at(p + ".wv")), w_.at(p + ".bv")[0]);
    const std::size_t heads = c_.heads, dh = c_.d_model / heads;
    Mat ctx(q.size(), std::vector<double>(c_.d_model, 0.0));
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < q.size(); ++i) {
        std::vector<double> a(k.size(), 0.0);
        const std::size_t visible = causal ? i + 1 : k.size();
        double mx = -1e300;
        for (std::size_t j = 0; j < visible; ++j) {
          for (std::size_t t = 0; t < dh; ++t) a[j] += q[i][h * dh + t] * k[j][h * dh + t];
          a[j] /= std::sqrt(double(dh));
          mx = std::max(mx, a[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < visible; ++j) z += std::exp(a[j] - mx);
        for (std::size_t j = 0; j < k.size(); ++j) {
          a[j] = j < visible ? std::exp(a[j] - mx) / z : 0.0;
          if (conf) a[j] *= (*conf)[j];
        }
        if (conf && c_.renormalize_confidence) {
          double s = 0.0;
          for (double x : a) s += x;
          if (s != 0.0)
            for (double& x : a) x /= s;
        }
        for (std::size_t j = 0; j < k.size(); ++j)
          for (std::size_t t = 0; t < dh; ++t) ctx[i][h * dh + t] += a[j] * v[j][h * dh + t];
      }
    }
    return AddBias(MulM(ctx, w_.at(p + ".wo")), w_.at(p + ".bo")[0]);
  }

  ModelConfig c_;
  std::map<std::string, Mat> w_;
};

}  // namespace confbt::testing
