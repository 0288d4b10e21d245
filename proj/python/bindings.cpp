#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "jointsel/error.hpp"
#include "jointsel/pipeline.hpp"
#include "jointsel/session_io.hpp"

namespace py = pybind11;
using namespace jointsel;
using nlohmann::json;

namespace {

PipelineConfig config_of(const std::string& config_json) {
  json j = json::parse(config_json, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::InvalidConfig, "config is not valid JSON");
  return pipeline_config_from_json(j);
}

std::string read_text(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

py::tuple load_embeddings(const std::filesystem::path& path) {
  EmbeddingSet set = load_embedding_set(path);
  py::array_t<float> values({set.count(), set.dim});
  if (!set.values.empty()) std::memcpy(values.mutable_data(), set.values.data(), set.values.size() * sizeof(float));
  return py::make_tuple(std::string(to_string(set.kind)), set.ids, values);
}

void save_embeddings(const std::filesystem::path& path, const std::string& kind, const std::vector<std::string>& ids,
                     const py::array_t<float, py::array::c_style | py::array::forcecast>& values) {
  if (values.ndim() != 2) throw Error(ErrorCode::SizeMismatch, "values must be a 2-D array");
  if (kind != "vocab" && kind != "instance") throw Error(ErrorCode::HeaderMalformed, "kind must be vocab or instance");
  EmbeddingSet set;
  set.kind = kind == "vocab" ? EmbeddingKind::Vocab : EmbeddingKind::Instance;
  set.dim = static_cast<std::size_t>(values.shape(1));
  set.ids = ids;
  if (static_cast<std::size_t>(values.shape(0)) != ids.size()) {
    throw Error(ErrorCode::SizeMismatch, std::to_string(ids.size()) + " ids for " + std::to_string(values.shape(0)) + " rows");
  }
  set.values.assign(values.data(), values.data() + values.size());
  write_embedding_set(set, path);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Joint instance and verbalizer selection";
  static py::handle error_type = py::exception<Error>(m, "Error").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error_type(e.what());
      exc.attr("code") = std::string(error_code_name(e.code()));
      exc.attr("exit_code") = exit_code_for(e.code());
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def("generate", [](const std::string& cfg) {
    PipelineConfig c = config_of(cfg);
    c.mixture.seed = c.seed;
    py::gil_scoped_release release;
    write_corpus(generate(c.mixture), c.output_dir);
  }, py::arg("config_json"), "Writes a synthetic corpus into output_dir.");
  m.def("prepare", [](const std::string& cfg) {
    PipelineConfig c = config_of(cfg);
    py::gil_scoped_release release;
    return cmd_prepare(c).dump();
  }, py::arg("config_json"), "Builds the shared space and clustering; returns the manifest.");
  m.def("select", [](const std::string& cfg) {
    PipelineConfig c = config_of(cfg);
    py::gil_scoped_release release;
    cmd_select(c);
    return read_text(c.session_path());
  }, py::arg("config_json"), "Runs an oracle-mode session; returns the session export.");
  m.def("evaluate", [](const std::string& cfg) {
    PipelineConfig c = config_of(cfg);
    py::gil_scoped_release release;
    return report_to_json(cmd_eval(c)).dump();
  }, py::arg("config_json"), "Scores a session's verbalizers on the test set; returns the report.");
  m.def("simulate", [](const std::string& cfg) {
    PipelineConfig c = config_of(cfg);
    py::gil_scoped_release release;
    return simulate_csv(cmd_simulate(c));
  }, py::arg("config_json"), "Runs the strategy matrix on synthetic seeds; returns the CSV.");
  m.def("load_embeddings", &load_embeddings, py::arg("path"), "Returns (kind, ids, float32 array).");
  m.def("save_embeddings", &save_embeddings, py::arg("path"), py::arg("kind"), py::arg("ids"), py::arg("values"));
  m.def("load_labels", [](const std::filesystem::path& p) { return load_label_file(p); }, py::arg("path"));
}
