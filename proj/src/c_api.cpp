#include "saelab/c_api.h"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <new>
#include <string>

#include "saelab/dataset.hpp"
#include "saelab/encoders.hpp"
#include "saelab/error.hpp"
#include "saelab/experiment.hpp"
#include "saelab/matrix.hpp"
#include "saelab/sae.hpp"

struct saelab_config {
  saelab::ExperimentConfig cfg;
  bool verbose = false;
};

struct saelab_dataset {
  saelab::LabeledDataset ds;
};

struct saelab_model {
  saelab::SaeModel m;
  std::string arch;
};

namespace {

thread_local std::string g_last_error;

saelab_status status_of(saelab::ErrorKind kind) {
  using saelab::ErrorKind;
  switch (kind) {
    case ErrorKind::InvalidArgument: return SAELAB_ERR_INVALID_ARGUMENT;
    case ErrorKind::Usage: return SAELAB_ERR_USAGE;
    case ErrorKind::Io: return SAELAB_ERR_IO;
    case ErrorKind::Format: return SAELAB_ERR_FORMAT;
    case ErrorKind::Consistency: return SAELAB_ERR_CONSISTENCY;
    case ErrorKind::Degenerate: return SAELAB_ERR_DEGENERATE;
    case ErrorKind::Numeric: return SAELAB_ERR_NUMERIC;
    case ErrorKind::Contract: return SAELAB_ERR_CONTRACT;
  }
  return SAELAB_ERR_INTERNAL;
}

saelab_status fail(saelab_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename Fn>
saelab_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const saelab::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(SAELAB_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SAELAB_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SAELAB_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SAELAB_ERR_INTERNAL, "unknown error");
  }
}

saelab::Preset preset_of(const char* name) { return name ? saelab::parse_preset(name) : saelab::Preset::Desk; }

std::ostream* log_of(const saelab_config* c) { return c->verbose ? &std::cout : nullptr; }

#define SAELAB_REQUIRE_ARG(cond, msg) \
  if (!(cond)) return fail(SAELAB_ERR_INVALID_ARGUMENT, msg)

}  // namespace

extern "C" {

const char* saelab_version(void) { return "0.1.0"; }

const char* saelab_last_error(void) { return g_last_error.c_str(); }

const char* saelab_status_name(saelab_status status) {
  switch (status) {
    case SAELAB_OK: return "ok";
    case SAELAB_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case SAELAB_ERR_USAGE: return "usage";
    case SAELAB_ERR_IO: return "io";
    case SAELAB_ERR_FORMAT: return "format";
    case SAELAB_ERR_CONSISTENCY: return "consistency";
    case SAELAB_ERR_DEGENERATE: return "degenerate-input";
    case SAELAB_ERR_NUMERIC: return "numeric";
    case SAELAB_ERR_CONTRACT: return "contract-violation";
    case SAELAB_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

int saelab_exit_code(saelab_status status) {
  switch (status) {
    case SAELAB_OK: return 0;
    case SAELAB_ERR_USAGE: return 2;
    case SAELAB_ERR_INVALID_ARGUMENT:
    case SAELAB_ERR_IO:
    case SAELAB_ERR_FORMAT:
    case SAELAB_ERR_CONSISTENCY:
    case SAELAB_ERR_DEGENERATE: return 3;
    case SAELAB_ERR_NUMERIC: return 4;
    case SAELAB_ERR_CONTRACT:
    case SAELAB_ERR_INTERNAL: return 1;
  }
  return 1;
}

saelab_status saelab_config_load(const char* path, const char* preset, saelab_config** out) {
  SAELAB_REQUIRE_ARG(path && out, "saelab_config_load: null argument");
  return guarded([&] {
    auto* c = new saelab_config{saelab::load_config(path, preset_of(preset))};
    *out = c;
    return SAELAB_OK;
  });
}

saelab_status saelab_config_parse(const char* json_text, const char* preset, saelab_config** out) {
  SAELAB_REQUIRE_ARG(json_text && out, "saelab_config_parse: null argument");
  return guarded([&] {
    *out = new saelab_config{saelab::parse_config(json_text, preset_of(preset))};
    return SAELAB_OK;
  });
}

saelab_status saelab_config_default(saelab_config** out) {
  SAELAB_REQUIRE_ARG(out, "saelab_config_default: null argument");
  return guarded([&] {
    auto* c = new saelab_config{};
    c->cfg.sweep.values = {0.0};
    *out = c;
    return SAELAB_OK;
  });
}

void saelab_config_free(saelab_config* cfg) { delete cfg; }

saelab_status saelab_config_set_seed(saelab_config* cfg, uint64_t seed) {
  SAELAB_REQUIRE_ARG(cfg, "saelab_config_set_seed: null config");
  cfg->cfg.seed = seed;
  return SAELAB_OK;
}

saelab_status saelab_config_set_threads(saelab_config* cfg, unsigned threads) {
  SAELAB_REQUIRE_ARG(cfg, "saelab_config_set_threads: null config");
  if (threads < 1) return fail(SAELAB_ERR_USAGE, "threads must be at least 1");
  cfg->cfg.threads = threads;
  return SAELAB_OK;
}

saelab_status saelab_config_set_raster_extent(saelab_config* cfg, double extent) {
  SAELAB_REQUIRE_ARG(cfg, "saelab_config_set_raster_extent: null config");
  if (!(extent > 0.0)) return fail(SAELAB_ERR_USAGE, "raster extent must be positive");
  cfg->cfg.raster.extent = extent;
  return SAELAB_OK;
}

saelab_status saelab_config_set_raster_resolution(saelab_config* cfg, size_t resolution) {
  SAELAB_REQUIRE_ARG(cfg, "saelab_config_set_raster_resolution: null config");
  if (resolution < 2) return fail(SAELAB_ERR_USAGE, "raster resolution must be at least 2");
  cfg->cfg.raster.resolution = resolution;
  return SAELAB_OK;
}

saelab_status saelab_config_set_verbose(saelab_config* cfg, int verbose) {
  SAELAB_REQUIRE_ARG(cfg, "saelab_config_set_verbose: null config");
  cfg->verbose = verbose != 0;
  return SAELAB_OK;
}

saelab_status saelab_config_to_json(const saelab_config* cfg, char** out) {
  SAELAB_REQUIRE_ARG(cfg && out, "saelab_config_to_json: null argument");
  return guarded([&] {
    const std::string s = saelab::config_to_json(cfg->cfg);
    char* buf = static_cast<char*>(std::malloc(s.size() + 1));
    if (!buf) throw std::bad_alloc();
    std::memcpy(buf, s.c_str(), s.size() + 1);
    *out = buf;
    return SAELAB_OK;
  });
}

void saelab_string_free(char* s) { std::free(s); }

saelab_status saelab_cmd_gen_data(const saelab_config* cfg, const char* out_dir) {
  SAELAB_REQUIRE_ARG(cfg && out_dir, "saelab_cmd_gen_data: null argument");
  return guarded([&] {
    saelab::cmd_gen_data(cfg->cfg, out_dir, log_of(cfg));
    return SAELAB_OK;
  });
}

saelab_status saelab_cmd_train(const saelab_config* cfg, const char* out_dir, const char* data_dir) {
  SAELAB_REQUIRE_ARG(cfg && out_dir, "saelab_cmd_train: null argument");
  return guarded([&] {
    std::optional<std::filesystem::path> data;
    if (data_dir) data = data_dir;
    const auto outcomes = saelab::cmd_train(cfg->cfg, out_dir, data, log_of(cfg));
    std::string failed;
    for (const auto& o : outcomes)
      if (!o.ok) failed += (failed.empty() ? "" : "; ") + o.point + ": " + o.error;
    if (!failed.empty()) return fail(SAELAB_ERR_NUMERIC, failed);
    return SAELAB_OK;
  });
}

saelab_status saelab_cmd_eval(const saelab_config* cfg, const char* checkpoint, const char* data_dir,
                              const char* out_dir) {
  SAELAB_REQUIRE_ARG(cfg && checkpoint && data_dir && out_dir, "saelab_cmd_eval: null argument");
  return guarded([&] {
    saelab::cmd_eval(checkpoint, data_dir, out_dir, cfg->cfg, log_of(cfg));
    return SAELAB_OK;
  });
}

saelab_status saelab_cmd_raster(const saelab_config* cfg, const char* checkpoint, const char* data_dir,
                                const char* out_dir) {
  SAELAB_REQUIRE_ARG(cfg && checkpoint && data_dir && out_dir, "saelab_cmd_raster: null argument");
  return guarded([&] {
    saelab::cmd_raster(checkpoint, data_dir, out_dir, cfg->cfg, log_of(cfg));
    return SAELAB_OK;
  });
}

saelab_status saelab_cmd_report(const char* const* run_dirs, size_t count, const char* out_dir, int verbose) {
  SAELAB_REQUIRE_ARG((run_dirs || count == 0) && out_dir, "saelab_cmd_report: null argument");
  return guarded([&] {
    std::vector<std::filesystem::path> runs;
    for (size_t i = 0; i < count; ++i) {
      if (!run_dirs[i]) throw saelab::InvalidArgument("saelab_cmd_report: null run directory");
      runs.emplace_back(run_dirs[i]);
    }
    saelab::cmd_report(runs, out_dir, verbose ? &std::cout : nullptr);
    return SAELAB_OK;
  });
}

saelab_status saelab_dataset_load(const char* dir, saelab_dataset** out) {
  SAELAB_REQUIRE_ARG(dir && out, "saelab_dataset_load: null argument");
  return guarded([&] {
    *out = new saelab_dataset{saelab::load_dataset(dir)};
    return SAELAB_OK;
  });
}

saelab_status saelab_dataset_save(const saelab_dataset* ds, const char* dir) {
  SAELAB_REQUIRE_ARG(ds && dir, "saelab_dataset_save: null argument");
  return guarded([&] {
    saelab::save_dataset(ds->ds, dir);
    return SAELAB_OK;
  });
}

void saelab_dataset_free(saelab_dataset* ds) { delete ds; }
size_t saelab_dataset_rows(const saelab_dataset* ds) { return ds ? ds->ds.size() : 0; }
size_t saelab_dataset_cols(const saelab_dataset* ds) { return ds ? ds->ds.dim() : 0; }
size_t saelab_dataset_concepts(const saelab_dataset* ds) { return ds ? ds->ds.num_concepts() : 0; }
const double* saelab_dataset_data(const saelab_dataset* ds) { return ds ? ds->ds.x.data() : nullptr; }
const uint32_t* saelab_dataset_labels(const saelab_dataset* ds) { return ds ? ds->ds.labels.data() : nullptr; }

saelab_status saelab_model_load(const char* dir, saelab_model** out) {
  SAELAB_REQUIRE_ARG(dir && out, "saelab_model_load: null argument");
  return guarded([&] {
    std::filesystem::path p(dir);
    if (std::filesystem::exists(p / "checkpoint" / "model.json")) p /= "checkpoint";
    auto m = saelab::load_model(p);
    const std::string arch = saelab::to_string(m.arch);
    *out = new saelab_model{std::move(m), arch};
    return SAELAB_OK;
  });
}

saelab_status saelab_model_save(const saelab_model* m, const char* dir) {
  SAELAB_REQUIRE_ARG(m && dir, "saelab_model_save: null argument");
  return guarded([&] {
    saelab::save_model(m->m, dir);
    return SAELAB_OK;
  });
}

void saelab_model_free(saelab_model* m) { delete m; }
size_t saelab_model_input_dim(const saelab_model* m) { return m ? m->m.d : 0; }
size_t saelab_model_latents(const saelab_model* m) { return m ? m->m.s : 0; }
const char* saelab_model_arch(const saelab_model* m) { return m ? m->arch.c_str() : ""; }

saelab_status saelab_model_encode(const saelab_model* m, const double* x, size_t n, double* z_out) {
  SAELAB_REQUIRE_ARG(m && x && z_out && n > 0, "saelab_model_encode: null or empty argument");
  return guarded([&] {
    const saelab::Matrix xm(n, m->m.d, std::vector<double>(x, x + n * m->m.d));
    const saelab::Matrix z = saelab::encode_batch(m->m, xm);
    std::memcpy(z_out, z.data(), sizeof(double) * n * m->m.s);
    return SAELAB_OK;
  });
}

saelab_status saelab_model_reconstruct(const saelab_model* m, const double* x, size_t n, double* x_hat_out) {
  SAELAB_REQUIRE_ARG(m && x && x_hat_out && n > 0, "saelab_model_reconstruct: null or empty argument");
  return guarded([&] {
    const saelab::Matrix xm(n, m->m.d, std::vector<double>(x, x + n * m->m.d));
    const saelab::Matrix xh = saelab::reconstruct_batch(m->m, xm);
    std::memcpy(x_hat_out, xh.data(), sizeof(double) * n * m->m.d);
    return SAELAB_OK;
  });
}

saelab_status saelab_sparsemax(const double* v, size_t n, double* z_out) {
  SAELAB_REQUIRE_ARG(v && z_out && n > 0, "saelab_sparsemax: null or empty argument");
  return guarded([&] {
    const auto act = saelab::sparsemax(std::span<const double>(v, n));
    std::memcpy(z_out, act.z.data(), sizeof(double) * n);
    return SAELAB_OK;
  });
}

saelab_status saelab_matrix_write(const char* path, const double* data, size_t rows, size_t cols) {
  SAELAB_REQUIRE_ARG(path && (data || rows * cols == 0), "saelab_matrix_write: null argument");
  return guarded([&] {
    saelab::write_matrix(path, saelab::Matrix(rows, cols, std::vector<double>(data, data + rows * cols)));
    return SAELAB_OK;
  });
}

saelab_status saelab_matrix_read(const char* path, double** data, size_t* rows, size_t* cols) {
  SAELAB_REQUIRE_ARG(path && data && rows && cols, "saelab_matrix_read: null argument");
  return guarded([&] {
    const saelab::Matrix m = saelab::read_matrix(path);
    const size_t count = m.rows() * m.cols();
    auto* buf = static_cast<double*>(std::malloc(sizeof(double) * (count ? count : 1)));
    if (!buf) throw std::bad_alloc();
    if (count) std::memcpy(buf, m.data(), sizeof(double) * count);
    *data = buf;
    *rows = m.rows();
    *cols = m.cols();
    return SAELAB_OK;
  });
}

void saelab_buffer_free(double* data) { std::free(data); }

}  // extern "C"
