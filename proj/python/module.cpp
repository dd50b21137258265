#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gmskip/bench.hpp"
#include "gmskip/error.hpp"
#include "gmskip/search.hpp"

namespace py = pybind11;
using namespace gmskip;

namespace {

SearchParams params(double lam, int max_remove, double tie_tolerance, int jobs) {
    SearchParams p;
    p.lambda = lam;
    p.max_remove = max_remove;
    p.tie_tolerance = tie_tolerance;
    p.jobs = jobs;
    return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Metric-guided greedy block skipping";

    py::exception<Error>(m, "GmSkipError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object type = py::module_::import("gmskip._core").attr("GmSkipError");
            py::object exc = type(e.what());
            exc.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(type.ptr(), exc.ptr());
        }
    });

    py::class_<IterationRecord>(m, "IterationRecord")
        .def_readonly("iteration", &IterationRecord::iteration)
        .def_readonly("candidate_deltas", &IterationRecord::candidate_deltas)
        .def_readonly("chosen", &IterationRecord::chosen)
        .def_readonly("score_after", &IterationRecord::score_after)
        .def_readonly("accepted", &IterationRecord::accepted);

    py::class_<SkipConfig>(m, "SkipConfig")
        .def_readonly("model_id", &SkipConfig::model_id)
        .def_readonly("total_blocks", &SkipConfig::total_blocks)
        .def_readonly("skipped", &SkipConfig::skipped)
        .def_readonly("lambda_", &SkipConfig::lambda)
        .def_readonly("max_remove", &SkipConfig::max_remove)
        .def_readonly("metric", &SkipConfig::metric)
        .def_readonly("full_score", &SkipConfig::full_score)
        .def_readonly("final_score", &SkipConfig::final_score)
        .def_readonly("trace", &SkipConfig::trace)
        .def_property_readonly("retained", [](const SkipConfig& c) { return c.retained().retained(); })
        .def_property_readonly("sparsity", &sparsity)
        .def("to_json", &serialize)
        .def_static("from_json", &deserialize)
        .def("__eq__", [](const SkipConfig& a, const SkipConfig& b) { return a == b; })
        .def("__repr__", [](const SkipConfig& c) {
            std::string s = "SkipConfig(skipped=[";
            for (std::size_t i = 0; i < c.skipped.size(); ++i) s += (i ? ", " : "") + std::to_string(c.skipped[i]);
            return s + "], final_score=" + format_real(c.final_score) + ")";
        });

    // Python callbacks run one at a time on the calling thread.
    m.def(
        "search",
        [](const std::function<double(std::vector<int>)>& score, int total_blocks, const std::string& metric,
           double lam, int max_remove, double tie_tolerance, const std::string& model_id) {
            if (max_remove < 0) max_remove = total_blocks - 1;
            FunctionEvaluator e(total_blocks, metric, [&](const BlockSet& s) { return score(s.retained()); });
            return greedy_search(e, params(lam, max_remove, tie_tolerance, 1), model_id);
        },
        py::arg("score"), py::arg("total_blocks"), py::arg("metric") = "top1", py::arg("lam") = 1.0,
        py::arg("max_remove") = -1, py::arg("tie_tolerance") = 0.0, py::arg("model_id") = "",
        "Greedy search where score(retained_indices) -> float. max_remove < 0 means L - 1.");

    m.def(
        "search_toy",
        [](const std::string& model, const std::string& task, const std::string& metric, double lam, int n,
           std::uint64_t data_seed, int max_remove, double tie_tolerance, int jobs) {
            const ToyModelSpec spec = ToyModelSpec::parse(model);
            auto toy = std::make_shared<const ToyModel>(spec);
            auto e = cached(std::make_shared<ToyEvaluator>(toy, gen_calibration(*toy, parse_task(task), n, data_seed),
                                                           metric));
            if (max_remove < 0) max_remove = spec.n_blocks - 1;
            py::gil_scoped_release release;
            return greedy_search(*e, params(lam, max_remove, tie_tolerance, jobs), spec.to_string());
        },
        py::arg("model"), py::arg("task"), py::arg("metric"), py::arg("lam") = 1.0, py::arg("n") = 256,
        py::arg("data_seed") = 1, py::arg("max_remove") = -1, py::arg("tie_tolerance") = 0.0, py::arg("jobs") = 1,
        "Greedy search on the built-in toy model with self-labeled calibration data.");

    m.def(
        "cider",
        [](const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references) {
            std::vector<Caption> c;
            for (const auto& s : candidates) c.push_back(tokenize(s));
            std::vector<ReferenceSet> r;
            for (const auto& set : references) {
                ReferenceSet rs;
                for (const auto& s : set) rs.push_back(tokenize(s));
                r.push_back(rs);
            }
            return cider(c, r).value;
        },
        py::arg("candidates"), py::arg("references"));

    m.def("sparsity_pct", &sparsity_pct, py::arg("skipped"), py::arg("total_blocks"));
    m.def("format_fixed", &format_fixed, py::arg("value"), py::arg("decimals"));
    m.def(
        "compare_latency",
        [](double baseline_median, double candidate_median) {
            LatencyStats a, b;
            a.median_s = baseline_median;
            b.median_s = candidate_median;
            return compare_latency(a, b);
        },
        py::arg("baseline_median"), py::arg("candidate_median"));
    m.def(
        "forward_macs",
        [](const std::string& model, int seq_len, int n_retained) {
            return ToyModel::forward_macs(ToyModelSpec::parse(model), seq_len, n_retained);
        },
        py::arg("model"), py::arg("seq_len"), py::arg("n_retained"));
}
