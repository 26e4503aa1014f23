#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "saelab/c_api.h"

namespace fs = std::filesystem;

namespace {

const char* kTiny = R"({"seed": 5, "dataset": {"kind": "separability", "n_per_concept": 150},
  "model": {"arch": "topk", "s": 10}, "train": {"iterations": 30, "batch_size": 64, "eval_every": 10},
  "sweep": {"param": "k", "values": [2, 3]}})";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("saelab_capi_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("status codes map to documented exit codes") {
  CHECK(saelab_exit_code(SAELAB_OK) == 0);
  CHECK(saelab_exit_code(SAELAB_ERR_USAGE) == 2);
  CHECK(saelab_exit_code(SAELAB_ERR_IO) == 3);
  CHECK(saelab_exit_code(SAELAB_ERR_FORMAT) == 3);
  CHECK(saelab_exit_code(SAELAB_ERR_CONSISTENCY) == 3);
  CHECK(saelab_exit_code(SAELAB_ERR_INVALID_ARGUMENT) == 3);
  CHECK(saelab_exit_code(SAELAB_ERR_NUMERIC) == 4);
  CHECK(saelab_exit_code(SAELAB_ERR_INTERNAL) == 1);
  CHECK(std::string(saelab_status_name(SAELAB_ERR_NUMERIC)) == "numeric");
}

TEST_CASE("config handles") {
  saelab_config* cfg = nullptr;
  REQUIRE(saelab_config_parse(kTiny, "desk", &cfg) == SAELAB_OK);
  CHECK(saelab_config_set_seed(cfg, 99) == SAELAB_OK);
  CHECK(saelab_config_set_threads(cfg, 0) == SAELAB_ERR_USAGE);
  CHECK(saelab_config_set_raster_extent(cfg, -1.0) == SAELAB_ERR_USAGE);
  CHECK(saelab_config_set_raster_resolution(cfg, 128) == SAELAB_OK);
  char* json = nullptr;
  REQUIRE(saelab_config_to_json(cfg, &json) == SAELAB_OK);
  const std::string text(json);
  saelab_string_free(json);
  CHECK(text.find("\"seed\": 99") != std::string::npos);
  CHECK(text.find("\"resolution\": 128") != std::string::npos);
  saelab_config_free(cfg);

  saelab_config* bad = nullptr;
  CHECK(saelab_config_parse("{\"bogus\": 1}", nullptr, &bad) == SAELAB_ERR_USAGE);
  CHECK(bad == nullptr);
  CHECK(std::string(saelab_last_error()).find("bogus") != std::string::npos);
  CHECK(saelab_config_parse(kTiny, "giant", &bad) == SAELAB_ERR_USAGE);
  CHECK(saelab_config_load("/no/such/file.json", nullptr, &bad) != SAELAB_OK);
  CHECK(saelab_config_parse(nullptr, nullptr, &bad) == SAELAB_ERR_INVALID_ARGUMENT);
}

TEST_CASE("commands, datasets and models through the C interface") {
  const fs::path out = scratch("cmds");
  saelab_config* cfg = nullptr;
  REQUIRE(saelab_config_parse(kTiny, nullptr, &cfg) == SAELAB_OK);
  REQUIRE(saelab_cmd_gen_data(cfg, out.c_str()) == SAELAB_OK);
  REQUIRE(saelab_cmd_train(cfg, out.c_str(), nullptr) == SAELAB_OK);

  saelab_dataset* ds = nullptr;
  REQUIRE(saelab_dataset_load((out / "data" / "test").c_str(), &ds) == SAELAB_OK);
  CHECK(saelab_dataset_cols(ds) == 2);
  CHECK(saelab_dataset_concepts(ds) == 6);
  const std::size_t n = saelab_dataset_rows(ds);
  CHECK(n == 6 * 45);

  saelab_model* m = nullptr;
  REQUIRE(saelab_model_load((out / "k_3").c_str(), &m) == SAELAB_OK);
  CHECK(std::string(saelab_model_arch(m)) == "topk");
  CHECK(saelab_model_input_dim(m) == 2);
  CHECK(saelab_model_latents(m) == 10);
  std::vector<double> z(n * 10), xh(n * 2);
  REQUIRE(saelab_model_encode(m, saelab_dataset_data(ds), n, z.data()) == SAELAB_OK);
  REQUIRE(saelab_model_reconstruct(m, saelab_dataset_data(ds), n, xh.data()) == SAELAB_OK);
  for (std::size_t i = 0; i < n; ++i) {
    int nnz = 0;
    for (std::size_t j = 0; j < 10; ++j) nnz += z[i * 10 + j] > 0.0;
    CHECK(nnz <= 3);
  }

  REQUIRE(saelab_cmd_eval(cfg, out.c_str(), (out / "data").c_str(), (out / "eval").c_str()) == SAELAB_OK);
  CHECK(fs::exists(out / "eval" / "k_2" / "report.json"));
  saelab_config_set_raster_resolution(cfg, 24);
  REQUIRE(saelab_cmd_raster(cfg, (out / "k_2").c_str(), (out / "data").c_str(), (out / "raster").c_str()) ==
          SAELAB_OK);
  const char* runs[] = {out.c_str()};
  REQUIRE(saelab_cmd_report(runs, 1, (out / "tables").c_str(), 0) == SAELAB_OK);
  CHECK(fs::exists(out / "tables" / "summary.csv"));

  CHECK(saelab_cmd_eval(cfg, (out / "missing").c_str(), (out / "data").c_str(), (out / "e2").c_str()) ==
        SAELAB_ERR_IO);
  CHECK(saelab_model_encode(m, nullptr, 1, z.data()) == SAELAB_ERR_INVALID_ARGUMENT);

  saelab_model_free(m);
  saelab_dataset_free(ds);
  saelab_config_free(cfg);
  fs::remove_all(out);
}

TEST_CASE("sparsemax and matrix files through the C interface") {
  const double v[3] = {0.5, 0.1, -0.2};
  double z[3];
  REQUIRE(saelab_sparsemax(v, 3, z) == SAELAB_OK);
  CHECK(z[0] + z[1] + z[2] == doctest::Approx(1.0));
  CHECK(z[2] == 0.0);

  const fs::path p = fs::temp_directory_path() / "saelab_capi_matrix.saem";
  const double data[6] = {1, 2, 3, 4, 5, 6};
  REQUIRE(saelab_matrix_write(p.c_str(), data, 2, 3) == SAELAB_OK);
  double* back = nullptr;
  size_t rows = 0, cols = 0;
  REQUIRE(saelab_matrix_read(p.c_str(), &back, &rows, &cols) == SAELAB_OK);
  CHECK(rows == 2);
  CHECK(cols == 3);
  CHECK(std::memcmp(back, data, sizeof data) == 0);
  saelab_buffer_free(back);
  fs::remove(p);
  CHECK(saelab_matrix_read("/no/such.saem", &back, &rows, &cols) == SAELAB_ERR_IO);
}
