#include "forge/stage_report.hpp"

namespace forge {

StageReport& StageReport::operator+=(const StageReport& other) {
  if (stage.empty()) stage = other.stage;
  input += other.input;
  kept += other.kept;
  dropped += other.dropped;
  errored += other.errored;
  for (const auto& [k, v] : other.reasons) reasons[k] += v;
  return *this;
}

nlohmann::ordered_json StageReport::to_json() const {
  nlohmann::ordered_json r = nlohmann::ordered_json::object();
  for (const auto& [k, v] : reasons) r[k] = v;
  return {{"stage", stage}, {"input", input}, {"kept", kept}, {"dropped", dropped}, {"errored", errored}, {"reasons", r}};
}

StageReport StageReport::from_json(const nlohmann::json& j) {
  StageReport s;
  s.stage = j.at("stage").get<std::string>();
  s.input = j.at("input").get<std::size_t>();
  s.kept = j.at("kept").get<std::size_t>();
  s.dropped = j.at("dropped").get<std::size_t>();
  s.errored = j.value("errored", std::size_t{0});
  const auto reasons = j.value("reasons", nlohmann::json::object());
  for (const auto& [k, v] : reasons.items()) s.reasons[k] = v.get<std::size_t>();
  return s;
}

}  // namespace forge
