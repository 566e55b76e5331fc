// src/evaluate.cpp

// Copyright 2026  The comoe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "comoe/analysis.hpp"
#include "comoe/errors.hpp"

namespace comoe {

nlohmann::json EvalReport::to_json() const {
  nlohmann::json classes = nlohmann::json::object();
  for (int c = 0; c < kNumLidClasses; ++c) {
    const ClassScore& s = per_class[static_cast<std::size_t>(c)];
    classes[std::string(lid_name(static_cast<Lid>(c)))] = {
        {"utterances", s.utterances}, {"edits", s.edits}, {"ref_tokens", s.ref_tokens}, {"error_rate", s.error_rate}};
  }
  nlohmann::json j = {{"per_class", classes}, {"average", average}, {"utterances", utterances}};
  j["lid_accuracy"] = lid_accuracy ? nlohmann::json(*lid_accuracy) : nlohmann::json(nullptr);
  return j;
}

EvalReport evaluate(std::span<const Utterance> split, const std::function<Prediction(const Utterance&)>& predict) {
  if (split.empty()) throw ValidationError("evaluate: empty split");
  EvalReport report;
  std::size_t lid_correct = 0;
  std::size_t lid_seen = 0;
  for (const Utterance& utt : split) {
    if (utt.tokens.empty()) throw ValidationError("evaluate: " + utt.id + " has an empty reference");
    const Prediction pred = predict(utt);
    ClassScore& s = report.per_class[static_cast<std::size_t>(utt.lid)];
    ++s.utterances;
    s.edits += edit_distance(pred.hypothesis, utt.tokens);
    s.ref_tokens += utt.tokens.size();
    if (pred.lid_probs) {
      const auto& p = *pred.lid_probs;
      const auto best = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
      lid_correct += best == static_cast<int>(utt.lid) ? 1 : 0;
      ++lid_seen;
    }
  }
  report.utterances = split.size();
  double weighted = 0.0;
  for (ClassScore& s : report.per_class) {
    if (s.ref_tokens > 0) s.error_rate = static_cast<double>(s.edits) / static_cast<double>(s.ref_tokens);
    weighted += s.error_rate * static_cast<double>(s.utterances);
  }
  report.average = weighted / static_cast<double>(report.utterances);
  if (lid_seen > 0) {
    if (lid_seen != split.size()) throw ValidationError("evaluate: LID probabilities missing for some utterances");
    report.lid_accuracy = static_cast<double>(lid_correct) / static_cast<double>(lid_seen);
  }
  return report;
}

template <typename Real>
Prediction predict(const EncoderModel<Real>& model, const Utterance& utt) {
  NoGradGuard no_grad;
  const EncoderOutput<Real> enc = model.forward(utt);
  Prediction pred;
  pred.hypothesis = greedy_ctc_decode(model.ctc_log_probs(enc.states));
  if (enc.routing) pred.lid_probs = enc.routing->p;
  return pred;
}

template <typename Real>
EvalReport evaluate(const EncoderModel<Real>& model, std::span<const Utterance> split) {
  for (const Utterance& utt : split) {
    if (utt.d_feat != static_cast<std::size_t>(model.config().d_feat))
      throw ValidationError("evaluate: " + utt.id + " has d_feat " + std::to_string(utt.d_feat) + ", model expects " +
                            std::to_string(model.config().d_feat));
    for (int tok : utt.tokens) {
      if (tok < 0 || tok >= model.config().vocab_size)
        throw ValidationError("evaluate: " + utt.id + " has token " + std::to_string(tok) + " outside the model vocabulary");
    }
  }
  return evaluate(split, [&](const Utterance& u) { return predict(model, u); });
}

template Prediction predict(const EncoderModel<float>&, const Utterance&);
template Prediction predict(const EncoderModel<double>&, const Utterance&);
template EvalReport evaluate(const EncoderModel<float>&, std::span<const Utterance>);
template EvalReport evaluate(const EncoderModel<double>&, std::span<const Utterance>);

std::string format_eval_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %8s %8s %8s %8s %8s\n", "system", "CN", "EN", "CS", "avg", "LID");
  out << line;
  for (const auto& [name, r] : rows) {
    char lid[32] = "-";
    if (r.lid_accuracy) std::snprintf(lid, sizeof lid, "%.4f", *r.lid_accuracy);
    std::snprintf(line, sizeof line, "%-24s %8.4f %8.4f %8.4f %8.4f %8s\n", name.c_str(), r.per_class[0].error_rate,
                  r.per_class[1].error_rate, r.per_class[2].error_rate, r.average, lid);
    out << line;
  }
  return out.str();
}

}  // namespace comoe
