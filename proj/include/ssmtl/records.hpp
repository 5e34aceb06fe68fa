#ifndef SSMTL_RECORDS_HPP
#define SSMTL_RECORDS_HPP

#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ssmtl/metrics.hpp"
#include "ssmtl/trainer.hpp"

namespace ssmtl {

using OrderedJson = nlohmann::ordered_json;

inline OrderedJson to_json(const MtlScore& s) {
  OrderedJson j;
  j["p_va"] = s.p_va;
  j["p_exp"] = s.p_exp;
  j["p_au"] = s.p_au;
  j["p_mtl"] = s.p_mtl;
  j["ccc_valence"] = s.ccc_valence;
  j["ccc_arousal"] = s.ccc_arousal;
  j["va_defined"] = s.va_defined;
  j["exp_f1"] = s.exp_f1;
  j["au_f1"] = s.au_f1;
  return j;
}

/// One line of the training log.
inline std::string epoch_record(const EpochReport& r) {
  OrderedJson j;
  j["epoch"] = r.epoch;
  j["l_exp_sup"] = r.loss.exp_sup;
  j["l_exp_unsup"] = r.loss.exp_unsup;
  j["l_exp_cons"] = r.loss.exp_cons;
  j["l_au"] = r.loss.au;
  j["l_va"] = r.loss.va;
  j["l_exp"] = r.loss.exp;
  j["total"] = r.loss.total;
  j["confident_fraction"] = r.confident_fraction;
  j["thresholds"] = r.thresholds;
  j["val"] = to_json(r.val);
  return j.dump();
}

inline std::vector<std::string> curve_columns() {
  std::vector<std::string> cols = {"epoch",  "total", "l_exp", "l_exp_sup", "l_exp_unsup",
                                   "l_exp_cons", "l_au", "l_va", "confident_fraction"};
  for (int c = 0; c < kNumExpressions; ++c) cols.push_back("T" + std::to_string(c));
  for (const char* k : {"p_va", "p_exp", "p_au", "p_mtl"}) cols.emplace_back(k);
  return cols;
}

/// Converts a training log into CSV (one row per epoch). Throws ParseError naming the line.
inline std::string log_to_csv(std::string_view log) {
  const auto cols = curve_columns();
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += '\n';
  std::size_t line_no = 0;
  for (auto line : split(log, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = OrderedJson::parse(line);
      std::vector<std::string> row;
      row.push_back(std::to_string(j.at("epoch").get<int>()));
      for (const char* k : {"total", "l_exp", "l_exp_sup", "l_exp_unsup", "l_exp_cons", "l_au",
                            "l_va", "confident_fraction"})
        row.push_back(format_double(j.at(k).get<double>()));
      const auto& t = j.at("thresholds");
      if (!t.is_array() || t.size() != kNumExpressions) throw ParseError(line_no, "thresholds must have 8 entries");
      for (const auto& v : t) row.push_back(format_double(v.get<double>()));
      const auto& val = j.at("val");
      for (const char* k : {"p_va", "p_exp", "p_au", "p_mtl"})
        row.push_back(format_double(val.at(k).get<double>()));
      for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
      out += '\n';
    } catch (const ParseError&) {
      throw;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("corrupt log record: ") + e.what());
    }
  }
  return out;
}

}  // namespace ssmtl

#endif  // SSMTL_RECORDS_HPP
