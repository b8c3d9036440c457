#include "samkit/samkit.h"

#include <memory>
#include <string>
#include <vector>

#include "samkit/bidding.hpp"
#include "samkit/data_io.hpp"
#include "samkit/error.hpp"
#include "samkit/experiment.hpp"
#include "samkit/market_model.hpp"

struct samkit_experiment {
  samkit::ConfigFile file;
  std::string message;
  std::vector<std::string> artifacts;
};

namespace {

thread_local std::string g_last_error;

samkit_status code_of(samkit::ErrorCode c) {
  switch (c) {
    case samkit::ErrorCode::InvalidArgument:
      return SAMKIT_ERR_INVALID_ARGUMENT;
    case samkit::ErrorCode::Domain:
      return SAMKIT_ERR_DOMAIN;
    case samkit::ErrorCode::Parse:
      return SAMKIT_ERR_PARSE;
    case samkit::ErrorCode::Io:
      return SAMKIT_ERR_IO;
    case samkit::ErrorCode::Numeric:
      return SAMKIT_ERR_NUMERIC;
    case samkit::ErrorCode::Config:
      return SAMKIT_ERR_CONFIG;
  }
  return SAMKIT_ERR_INTERNAL;
}

template <class Fn>
samkit_status guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return SAMKIT_OK;
  } catch (const samkit::Error& e) {
    g_last_error = e.what();
    return code_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SAMKIT_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SAMKIT_ERR_INTERNAL;
  }
}

samkit_status null_arg(const char* what) {
  g_last_error = std::string(what) + " must not be null";
  return SAMKIT_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* samkit_version(void) { return "0.1.0"; }

const char* samkit_last_error(void) { return g_last_error.c_str(); }

const char* samkit_status_string(samkit_status status) {
  switch (status) {
    case SAMKIT_OK:
      return "ok";
    case SAMKIT_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case SAMKIT_ERR_DOMAIN:
      return "domain error";
    case SAMKIT_ERR_PARSE:
      return "parse error";
    case SAMKIT_ERR_IO:
      return "i/o error";
    case SAMKIT_ERR_NUMERIC:
      return "numeric error";
    case SAMKIT_ERR_CONFIG:
      return "config error";
    case SAMKIT_ERR_PARTIAL:
      return "partial results";
    case SAMKIT_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

samkit_status samkit_experiment_load(const char* config_path, samkit_experiment** out) {
  if (!config_path) return null_arg("config_path");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guard([&] {
    auto exp = std::make_unique<samkit_experiment>();
    exp->file = samkit::ConfigFile::load(config_path);
    samkit::load_experiment(exp->file);
    *out = exp.release();
  });
}

samkit_status samkit_experiment_load_text(const char* config_text, samkit_experiment** out) {
  if (!config_text) return null_arg("config_text");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guard([&] {
    auto exp = std::make_unique<samkit_experiment>();
    exp->file = samkit::ConfigFile::parse(config_text);
    samkit::load_experiment(exp->file);
    *out = exp.release();
  });
}

samkit_status samkit_experiment_set(samkit_experiment* exp, const char* key, const char* value) {
  if (!exp) return null_arg("experiment");
  if (!key || !value) return null_arg("key and value");
  return guard([&] {
    samkit::ConfigFile next = exp->file;
    next.set(key, value);
    samkit::load_experiment(next);
    exp->file = std::move(next);
  });
}

samkit_status samkit_experiment_execute(samkit_experiment* exp, const char* verb) {
  if (!exp) return null_arg("experiment");
  if (!verb) return null_arg("verb");
  exp->message.clear();
  exp->artifacts.clear();
  samkit::CommandResult result;
  const samkit_status st = guard([&] {
    const samkit::Command cmd = samkit::command_from_string(verb);
    result = samkit::execute(cmd, samkit::load_experiment(exp->file));
  });
  if (st != SAMKIT_OK) {
    exp->message = g_last_error;
    return st;
  }
  exp->message = result.message;
  exp->artifacts = result.written;
  if (result.partial) {
    g_last_error = result.message;
    return SAMKIT_ERR_PARTIAL;
  }
  return SAMKIT_OK;
}

const char* samkit_experiment_message(const samkit_experiment* exp) { return exp ? exp->message.c_str() : ""; }

size_t samkit_experiment_artifact_count(const samkit_experiment* exp) { return exp ? exp->artifacts.size() : 0; }

const char* samkit_experiment_artifact(const samkit_experiment* exp, size_t index) {
  if (!exp || index >= exp->artifacts.size()) return nullptr;
  return exp->artifacts[index].c_str();
}

void samkit_experiment_free(samkit_experiment* exp) { delete exp; }

samkit_status samkit_win_prob(samkit_market market, double scale, double bid, double* out) {
  if (!out) return null_arg("out");
  return guard([&] {
    const auto fam = market == SAMKIT_MARKET_UNIFORM ? samkit::MarketFamily::UniformMarket : samkit::MarketFamily::LongTail;
    if (market != SAMKIT_MARKET_UNIFORM && market != SAMKIT_MARKET_LONG_TAIL)
      samkit::fail(samkit::ErrorCode::InvalidArgument, "unknown market family");
    *out = samkit::win_prob(samkit::WinningFunction(fam, scale), bid);
  });
}

samkit_status samkit_bid(samkit_bid_kind kind, const double* params, size_t n_params, double theta, double payoff,
                         double* out) {
  if (!out) return null_arg("out");
  if (n_params > 0 && !params) return null_arg("params");
  return guard([&] {
    auto need = [&](size_t n) {
      if (n_params != n)
        samkit::fail(samkit::ErrorCode::InvalidArgument, "expected " + std::to_string(n) + " bid parameters");
    };
    samkit::BidFunction f = samkit::BidFunction::truth();
    switch (kind) {
      case SAMKIT_BID_CONST:
        need(1);
        f = samkit::BidFunction::constant(params[0]);
        break;
      case SAMKIT_BID_TRUTH:
        need(0);
        break;
      case SAMKIT_BID_LIN:
        need(2);
        f = samkit::BidFunction::lin(params[0], params[1]);
        break;
      case SAMKIT_BID_ORTB:
        need(2);
        f = samkit::BidFunction::ortb(params[0], params[1]);
        break;
      case SAMKIT_BID_SAM1:
        need(1);
        f = samkit::BidFunction::sam1(params[0]);
        break;
      case SAMKIT_BID_SAM2:
        need(2);
        f = samkit::BidFunction::sam2(params[0], params[1]);
        break;
      default:
        samkit::fail(samkit::ErrorCode::InvalidArgument, "unknown bid kind");
    }
    *out = f(theta, payoff);
  });
}

samkit_status samkit_sam1_lambda(double payoff, double volume, double budget, double scale, double phi, double* out) {
  if (!out) return null_arg("out");
  return guard([&] { *out = samkit::sam1_lambda_closed_form(payoff, volume, budget, scale, phi); });
}

samkit_status samkit_fit_long_tail(const double* prices, size_t n, double* out) {
  if (!out) return null_arg("out");
  if (n > 0 && !prices) return null_arg("prices");
  return guard([&] { *out = samkit::fit_long_tail_l(std::span<const double>(prices, n)); });
}

samkit_status samkit_validate_log(const char* path, int cpm, size_t* valid, size_t* rejected) {
  if (!path) return null_arg("path");
  return guard([&] {
    samkit::ParseOptions opts;
    opts.cpm = cpm != 0;
    const samkit::ParsedLog log = samkit::parse_log_file(path, opts);
    if (valid) *valid = log.stats.valid;
    if (rejected) *rejected = log.stats.rejected();
  });
}

}  // extern "C"
