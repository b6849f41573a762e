// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// GRU and LSTM cells composed from tape ops, plus sequence runners that
// handle right-padded batches.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "glyphemb/autodiff.hpp"
#include "glyphemb/random.hpp"

namespace glyphemb {

/// GRU parameters. Gate blocks are laid out [update | reset | candidate].
template <typename T>
struct GruWeights {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Parameter<T> w;     // input_dim x 3H
  Parameter<T> u_zr;  // H x 2H, recurrent weights of the two gates
  Parameter<T> u_h;   // H x H, recurrent weights of the candidate
  Parameter<T> b;     // 3H

  GruWeights() = default;
  GruWeights(const std::string& prefix, std::size_t in, std::size_t hidden,
             Rng& rng)
      : input_dim(in),
        hidden_dim(hidden),
        w(uniform_parameter<T>(prefix + "/W", {in, 3 * hidden}, in, hidden,
                               rng)),
        u_zr(uniform_parameter<T>(prefix + "/U_zr", {hidden, 2 * hidden},
                                  hidden, hidden, rng)),
        u_h(uniform_parameter<T>(prefix + "/U_h", {hidden, hidden}, hidden,
                                 hidden, rng)),
        b(zero_parameter<T>(prefix + "/b", {3 * hidden})) {}

  std::vector<Parameter<T>*> parameters() { return {&w, &u_zr, &u_h, &b}; }

  struct Bound {
    Var w, u_zr, u_h, b;
    std::size_t hidden = 0;
  };
  Bound bind(Tape<T>& tape) {
    return {tape.parameter(w), tape.parameter(u_zr), tape.parameter(u_h),
            tape.parameter(b), hidden_dim};
  }
};

/// z = sigmoid(Wz x + Uz h + bz); r = sigmoid(Wr x + Ur h + br);
/// h~ = tanh(Wh x + Uh (r * h) + bh); h' = (1 - z) * h + z * h~.
template <typename T>
Var gru_step(Tape<T>& tape, Var x, Var h,
             const typename GruWeights<T>::Bound& p) {
  const std::size_t hd = p.hidden;
  detail::require(tape.value(h).rank() == 2 && tape.value(h).dim(1) == hd,
                  "gru_step", "hidden state shape " +
                                  shape_string(tape.shape(h)) +
                                  " does not match hidden size " +
                                  std::to_string(hd));
  detail::require(tape.value(x).dim(0) == tape.value(h).dim(0), "gru_step",
                  "batch sizes of input and state differ");
  Var xw = dense(tape, x, p.w, p.b);
  Var hu = matmul(tape, h, p.u_zr);
  Var z = sigmoid(tape, add(tape, slice_cols(tape, xw, 0, hd),
                            slice_cols(tape, hu, 0, hd)));
  Var r = sigmoid(tape, add(tape, slice_cols(tape, xw, hd, hd),
                            slice_cols(tape, hu, hd, hd)));
  Var cand = tanh(tape, add(tape, slice_cols(tape, xw, 2 * hd, hd),
                            matmul(tape, mul(tape, r, h), p.u_h)));
  return add(tape, h, mul(tape, z, sub(tape, cand, h)));
}

/// LSTM parameters. Gate blocks are laid out [input | forget | cell | output].
template <typename T>
struct LstmWeights {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Parameter<T> w;  // input_dim x 4H
  Parameter<T> u;  // H x 4H
  Parameter<T> b;  // 4H

  LstmWeights() = default;
  LstmWeights(const std::string& prefix, std::size_t in, std::size_t hidden,
              Rng& rng)
      : input_dim(in),
        hidden_dim(hidden),
        w(uniform_parameter<T>(prefix + "/W", {in, 4 * hidden}, in, hidden,
                               rng)),
        u(uniform_parameter<T>(prefix + "/U", {hidden, 4 * hidden}, hidden,
                               hidden, rng)),
        b(zero_parameter<T>(prefix + "/b", {4 * hidden})) {}

  std::vector<Parameter<T>*> parameters() { return {&w, &u, &b}; }

  struct Bound {
    Var w, u, b;
    std::size_t hidden = 0;
  };
  Bound bind(Tape<T>& tape) {
    return {tape.parameter(w), tape.parameter(u), tape.parameter(b),
            hidden_dim};
  }
};

template <typename T>
struct LstmState {
  Var h;
  Var c;
};

/// c' = f * c + i * g;  h' = o * tanh(c').
template <typename T>
LstmState<T> lstm_step(Tape<T>& tape, Var x, LstmState<T> state,
                       const typename LstmWeights<T>::Bound& p) {
  const std::size_t hd = p.hidden;
  detail::require(tape.value(state.h).rank() == 2 &&
                      tape.value(state.h).dim(1) == hd &&
                      tape.shape(state.c) == tape.shape(state.h),
                  "lstm_step", "state shape does not match hidden size " +
                                   std::to_string(hd));
  detail::require(tape.value(x).dim(0) == tape.value(state.h).dim(0),
                  "lstm_step", "batch sizes of input and state differ");
  Var gates = add(tape, dense(tape, x, p.w, p.b), matmul(tape, state.h, p.u));
  Var i = sigmoid(tape, slice_cols(tape, gates, 0, hd));
  Var f = sigmoid(tape, slice_cols(tape, gates, hd, hd));
  Var g = tanh(tape, slice_cols(tape, gates, 2 * hd, hd));
  Var o = sigmoid(tape, slice_cols(tape, gates, 3 * hd, hd));
  Var c = add(tape, mul(tape, f, state.c), mul(tape, i, g));
  Var h = mul(tape, o, tanh(tape, c));
  return {h, c};
}

/// Per-timestep 0/1 masks for a right-padded batch: mask[t][b] = t < len[b].
inline std::vector<std::vector<std::uint8_t>> step_masks(
    std::span<const std::size_t> lengths, std::size_t steps) {
  std::vector<std::vector<std::uint8_t>> m(steps,
                                           std::vector<std::uint8_t>(lengths.size()));
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t b = 0; b < lengths.size(); ++b) m[t][b] = t < lengths[b];
  return m;
}

/// Runs a GRU left to right over `inputs` (one B x D Var per step). Rows
/// past their sequence length keep their previous state.
template <typename T>
std::vector<Var> run_gru(Tape<T>& tape, std::span<const Var> inputs,
                         const typename GruWeights<T>::Bound& p,
                         std::span<const std::size_t> lengths) {
  const std::size_t batch = lengths.size();
  const auto masks = step_masks(lengths, inputs.size());
  Var h = tape.constant(Tensor<T>({batch, p.hidden}));
  std::vector<Var> out;
  out.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Var fresh = gru_step(tape, inputs[t], h, p);
    h = masked_blend(tape, fresh, h, std::span<const std::uint8_t>(masks[t]));
    out.push_back(h);
  }
  return out;
}

/// Runs an LSTM over `inputs`; reverse=true processes each row from its own
/// last real step back to step 0, which is what a right-padded batch needs.
template <typename T>
std::vector<Var> run_lstm(Tape<T>& tape, std::span<const Var> inputs,
                          const typename LstmWeights<T>::Bound& p,
                          std::span<const std::size_t> lengths, bool reverse) {
  const std::size_t batch = lengths.size();
  const std::size_t steps = inputs.size();
  const auto masks = step_masks(lengths, steps);
  LstmState<T> s{tape.constant(Tensor<T>({batch, p.hidden})),
                 tape.constant(Tensor<T>({batch, p.hidden}))};
  std::vector<Var> out(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    LstmState<T> fresh = lstm_step(tape, inputs[t], s, p);
    std::span<const std::uint8_t> m(masks[t]);
    s.h = masked_blend(tape, fresh.h, s.h, m);
    s.c = masked_blend(tape, fresh.c, s.c, m);
    out[t] = s.h;
  }
  return out;
}

}  // namespace glyphemb
