// Python bindings for the SDGM core. Arrays cross the boundary as float64
// numpy arrays; everything else is plain Python values.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <iostream>
#include <optional>

#include "sdgm/checkpoint.hpp"
#include "sdgm/config.hpp"
#include "sdgm/corpus.hpp"
#include "sdgm/error.hpp"
#include "sdgm/genhead.hpp"
#include "sdgm/gmm.hpp"
#include "sdgm/model.hpp"
#include "sdgm/pipeline.hpp"
#include "sdgm/stft.hpp"
#include "sdgm/trainer.hpp"

namespace py = pybind11;
using namespace sdgm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a, std::size_t rank, const char* what) {
  if (static_cast<std::size_t>(a.ndim()) != rank) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(what) + " must have " + std::to_string(rank) + " dimensions");
  }
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  Tensor t(shape);
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape.begin(), t.shape.end()));
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

py::dict epoch_dict(const train::EpochMetrics& e) {
  py::dict d;
  d["epoch"] = e.epoch;
  d["train_total"] = e.train_total;
  d["train_time"] = e.train_time;
  d["train_freq"] = e.train_freq;
  d["train_nll"] = e.train_nll;
  d["train_prior"] = e.train_prior;
  d["val_ppl"] = e.val_ppl;
  d["val_fidelity"] = e.val_fidelity;
  d["sec"] = e.sec;
  return d;
}

py::dict gmm_dict(const gmm::GmmModel& g) {
  py::dict d;
  d["weights"] = g.weights;
  d["means"] = to_array(g.means);
  d["variances"] = to_array(g.variances);
  return d;
}

// Trained model plus the vocabulary it was trained with.
struct Model {
  ckpt::Checkpoint ck;
  corpus::Vocab vocab;
  std::vector<train::EpochMetrics> epochs;
  std::size_t best_epoch = 0;

  static Model load(const std::filesystem::path& ckpt_path, const std::filesystem::path& vocab_path) {
    Model m;
    m.ck = ckpt::load(ckpt_path);
    m.vocab = corpus::load_vocab(vocab_path);
    if (m.vocab.size() != m.ck.model.vocab_size) {
      throw Error(ErrorKind::DimensionMismatch, "vocabulary size differs from the checkpoint");
    }
    return m;
  }

  void save(const std::filesystem::path& ckpt_path, const std::filesystem::path& vocab_path) const {
    ckpt::save(ck, ckpt_path);
    corpus::save_vocab(vocab, vocab_path);
  }

  py::dict evaluate(const std::string& text, std::size_t gen_budget, std::uint64_t seed) const {
    corpus::BatchPlan plan;
    plan.seq_len = ck.model.seq_len;
    plan.stride = ck.model.seq_len;
    const auto ids = corpus::encode(text, vocab, ck.token_mode);
    const auto batches = corpus::batchify(ids, plan);
    train::EvalReport ev;
    {
      py::gil_scoped_release release;
      ev = train::evaluate(ck.params, ck.model, batches, ck.gmm.empty() ? nullptr : &ck.gmm,
                           gen_budget, seed);
    }
    py::dict d;
    d["perplexity"] = ev.perplexity;
    d["mean_nll"] = ev.mean_nll;
    d["cosine_fidelity"] = ev.cosine_fidelity;
    d["tokens_per_sec"] = ev.tokens_per_sec;
    d["token_count"] = ev.token_count;
    d["peak_mem_bytes"] = ev.peak_mem_bytes;
    return d;
  }

  std::string generate(std::size_t length, std::uint64_t seed, const std::string& mode,
                       double temperature, const std::string& prompt) const {
    head::GenRequest req;
    req.length = length;
    req.seed = seed;
    req.mode = head::parse_decode_mode(mode);
    req.temperature = temperature;
    std::vector<corpus::TokenId> shown;
    if (!prompt.empty()) {
      req.prompt = corpus::encode(prompt, vocab, ck.token_mode);
      req.prompt.pop_back();  // eos
      shown = req.prompt;
    }
    const auto res = head::generate(ck.params, ck.model, ck.gmm, req);
    shown.insert(shown.end(), res.tokens.begin(), res.tokens.end());
    return corpus::decode(shown, vocab, ck.token_mode);
  }

  std::vector<corpus::TokenId> generate_ids(std::size_t length, std::uint64_t seed,
                                            const std::string& mode) const {
    head::GenRequest req;
    req.length = length;
    req.seed = seed;
    req.mode = head::parse_decode_mode(mode);
    return head::generate(ck.params, ck.model, ck.gmm, req).tokens;
  }
};

Model train_model(const std::string& text, const train::TrainConfig& base, bool verbose) {
  auto cfg = base;
  auto prep = pipeline::prepare(text, cfg);
  train::TrainResult res;
  {
    py::gil_scoped_release release;
    train::TrainHooks hooks;
    if (verbose) hooks.log = &std::cerr;
    res = train::train(prep.split, cfg, hooks);
  }
  Model m;
  m.ck = pipeline::make_checkpoint(res, cfg);
  m.vocab = std::move(prep.vocab);
  m.epochs = res.epochs;
  m.best_epoch = res.best_epoch;
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spectral dictionary generative model: training, evaluation and generation";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result(
      [&]() { return py::exception<Error>(m, "SdgmError", PyExc_RuntimeError); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      // invalid arguments read better as ValueError on the Python side
      if (e.kind() == ErrorKind::InvalidArgument) {
        PyErr_SetString(PyExc_ValueError, e.what());
      } else {
        py::set_error(error_type.get_stored(), e.what());
      }
    }
  });

  py::class_<corpus::Vocab>(m, "Vocab")
      .def(py::init<>())
      .def("__len__", &corpus::Vocab::size)
      .def("token", &corpus::Vocab::token)
      .def("id", &corpus::Vocab::id)
      .def("__contains__", &corpus::Vocab::contains)
      .def_property_readonly("tokens", &corpus::Vocab::tokens)
      .def("save", [](const corpus::Vocab& v, const std::filesystem::path& p) { corpus::save_vocab(v, p); })
      .def_static("load", &corpus::load_vocab);

  m.def(
      "build_vocab",
      [](const std::string& text, std::size_t max_size, const std::string& mode) {
        return corpus::build_vocab(text, max_size, corpus::parse_token_mode(mode));
      },
      py::arg("text"), py::arg("max_size") = 508, py::arg("mode") = "char");
  m.def(
      "encode",
      [](const std::string& text, const corpus::Vocab& v, const std::string& mode) {
        return corpus::encode(text, v, corpus::parse_token_mode(mode));
      },
      py::arg("text"), py::arg("vocab"), py::arg("mode") = "char");
  m.def(
      "decode",
      [](const std::vector<corpus::TokenId>& ids, const corpus::Vocab& v, const std::string& mode) {
        return corpus::decode(ids, v, corpus::parse_token_mode(mode));
      },
      py::arg("ids"), py::arg("vocab"), py::arg("mode") = "char");

  py::class_<train::TrainConfig>(m, "Config")
      .def(py::init<>())
      .def(py::init([](const py::kwargs& kw) {
        train::TrainConfig c;
        for (const auto& [k, v] : kw) config::apply(c, py::str(k).cast<std::string>(), py::str(v).cast<std::string>());
        return c;
      }))
      .def("set", [](train::TrainConfig& c, const std::string& key, const py::object& value) {
        config::apply(c, key, py::str(value).cast<std::string>());
      })
      .def("apply_text", [](train::TrainConfig& c, const std::string& text) { config::apply_text(c, text); })
      .def("dump", [](const train::TrainConfig& c) { return config::dump(c); })
      .def("__repr__", [](const train::TrainConfig& c) { return "Config(\n" + config::dump(c) + ")"; })
      .def_static("keys", &config::keys);

  py::class_<Model>(m, "Model")
      .def_static("load", &Model::load, py::arg("ckpt"), py::arg("vocab"))
      .def("save", &Model::save, py::arg("ckpt"), py::arg("vocab"))
      .def("checkpoint_bytes", [](const Model& md) { return py::bytes(ckpt::serialize(md.ck)); })
      .def("evaluate", &Model::evaluate, py::arg("text"), py::arg("gen_budget") = 0, py::arg("seed") = 0)
      .def("generate", &Model::generate, py::arg("length") = 16, py::arg("seed") = 0,
           py::arg("mode") = "sample", py::arg("temperature") = 1.0, py::arg("prompt") = "")
      .def("generate_ids", &Model::generate_ids, py::arg("length") = 16, py::arg("seed") = 0,
           py::arg("mode") = "sample")
      .def_property_readonly("vocab", [](const Model& md) { return md.vocab; })
      .def_property_readonly("metrics", [](const Model& md) {
        py::list out;
        for (const auto& e : md.epochs) out.append(epoch_dict(e));
        return out;
      })
      .def_property_readonly("best_epoch", [](const Model& md) { return md.best_epoch; })
      .def_property_readonly("seq_len", [](const Model& md) { return md.ck.model.seq_len; })
      .def_property_readonly("vocab_size", [](const Model& md) { return md.ck.model.vocab_size; })
      .def_property_readonly("parameter_count", [](const Model& md) { return md.ck.params.parameter_count(); })
      .def_property_readonly("gmm", [](const Model& md) { return gmm_dict(md.ck.gmm); })
      .def_property_readonly("amplitude", [](const Model& md) { return to_array(md.ck.params.dictionary.amplitude); })
      .def_property_readonly("frequency", [](const Model& md) { return to_array(md.ck.params.dictionary.frequency); })
      .def_property_readonly("phase", [](const Model& md) { return to_array(md.ck.params.dictionary.phase); });

  m.def("train", &train_model, py::arg("text"), py::arg("config") = train::TrainConfig{},
        py::arg("verbose") = false, "Train on `text`; the last val_fraction of it is held out.");

  m.def(
      "grad_check",
      [](double eps, double tol, std::uint64_t seed, std::optional<std::vector<double>> weights) {
        train::GradCheckConfig cfg;
        cfg.eps = eps;
        cfg.tol = tol;
        cfg.seed = seed;
        if (weights) {
          if (weights->size() != 4) throw Error(ErrorKind::InvalidArgument, "weights need four values");
          cfg.weights = {(*weights)[0], (*weights)[1], (*weights)[2], (*weights)[3]};
        }
        train::GradCheckReport rep;
        {
          py::gil_scoped_release release;
          rep = train::grad_check(cfg);
        }
        py::dict errors;
        for (std::size_t g = 0; g < kNumParamGroups; ++g) {
          errors[py::str(std::string(to_string(static_cast<ParamGroup>(g))))] = rep.max_rel_error[g];
        }
        py::dict d;
        d["max_rel_error"] = errors;
        d["passed"] = rep.passed;
        d["tol"] = rep.tol;
        return d;
      },
      py::arg("eps") = 1e-5, py::arg("tol") = 1e-4, py::arg("seed") = 0, py::arg("weights") = py::none());

  m.def(
      "bench_scaling",
      [](const std::vector<std::size_t>& lengths, std::size_t d_model, std::size_t dict_size,
         std::size_t batch, std::size_t repeats, std::uint64_t seed) {
        train::BenchConfig cfg;
        cfg.d_model = d_model;
        cfg.dict_size = dict_size;
        cfg.batch = batch;
        cfg.repeats = repeats;
        cfg.seed = seed;
        std::vector<train::BenchRow> rows;
        {
          py::gil_scoped_release release;
          rows = train::bench_scaling(cfg, lengths);
        }
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["L"] = r.length;
          d["forward_ms"] = r.forward_ms;
          d["decode_ms"] = r.decode_ms;
          d["mem_bytes"] = r.mem_bytes;
          out.append(d);
        }
        return out;
      },
      py::arg("lengths"), py::arg("d_model") = 64, py::arg("dict_size") = 32, py::arg("batch") = 1,
      py::arg("repeats") = 9, py::arg("seed") = 0);

  m.def(
      "synthesize_atoms",
      [](const Array& A, const Array& F, const Array& P, std::size_t length) {
        const DictionaryParams dict{to_tensor(A, 2, "amplitude"), to_tensor(F, 2, "frequency"),
                                    to_tensor(P, 2, "phase")};
        if (!dict.amplitude.same_shape(dict.frequency) || !dict.amplitude.same_shape(dict.phase)) {
          throw Error(ErrorKind::ShapeMismatch, "amplitude, frequency and phase must share a K x D shape");
        }
        return to_array(model::synthesize_atoms(dict, length).S);
      },
      py::arg("amplitude"), py::arg("frequency"), py::arg("phase"), py::arg("length"),
      "K x L x D atoms A sin(2 pi F (t+1) / L + phase).");

  m.def(
      "decode_atoms",
      [](const Array& C, const Array& S) {
        const Tensor atoms = to_tensor(S, 3, "atoms");
        return to_array(model::decode(to_tensor(C, 3, "coefficients"), {atoms, atoms.dim(1)}));
      },
      py::arg("coefficients"), py::arg("atoms"), "B x L x D reconstruction sum_k C[b,t,k] S[k,t,d].");

  m.def(
      "stft_magnitude",
      [](const Array& x, std::size_t n_fft, std::size_t hop, const std::string& window, bool center) {
        const loss::StftConfig cfg{n_fft, hop, loss::parse_window(window), center};
        cfg.validate();
        const Tensor signal = to_tensor(x, 1, "signal");
        const auto spec = loss::stft(signal.data, cfg);
        Tensor mag({spec.bins, spec.frames});
        for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(spec.values[i]);
        return to_array(mag);
      },
      py::arg("signal"), py::arg("n_fft") = 32, py::arg("hop") = 8, py::arg("window") = "hann",
      py::arg("center") = false, "One-sided magnitude spectrogram, bins x frames.");

  m.def(
      "fit_gmm",
      [](const Array& Z, std::size_t components, std::uint64_t seed, std::size_t max_iters, double tol,
         double var_floor, const std::string& init) {
        gmm::EmConfig cfg;
        cfg.seed = seed;
        cfg.max_iters = max_iters;
        cfg.tol = tol;
        cfg.var_floor = var_floor;
        cfg.init = gmm::parse_em_init(init);
        cfg.validate();
        const gmm::CoefficientBank bank{to_tensor(Z, 2, "Z")};
        gmm::FitResult fit;
        {
          py::gil_scoped_release release;
          fit = gmm::fit_em(bank, components, cfg);
        }
        auto d = gmm_dict(fit.model);
        d["ll_trace"] = fit.ll_trace;
        d["iterations"] = fit.iterations;
        d["converged"] = fit.converged;
        return d;
      },
      py::arg("Z"), py::arg("components"), py::arg("seed") = 0, py::arg("max_iters") = 100,
      py::arg("tol") = 1e-6, py::arg("var_floor") = 1e-6, py::arg("init") = "kmeans");
}
