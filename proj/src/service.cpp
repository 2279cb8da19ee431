#include "gaitdex/service.hpp"

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "gaitdex/errors.hpp"
#include "gaitdex/gait_data.hpp"
#include "gaitdex/indices.hpp"
#include "gaitdex/pipeline.hpp"
#include "gaitdex/report.hpp"
#include "gaitdex/serialization.hpp"
#include "gaitdex/text.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

namespace gaitdex {

using nlohmann::json;

ServiceConfig load_service_config(const std::optional<std::filesystem::path>& file) {
    ServiceConfig config;
    const auto to_size = [](const std::string& key, std::string_view value) {
        const auto v = text::parse_int(value);
        if (!v || *v < 0) throw ArgumentError("config: " + key + " must be a non-negative integer");
        return static_cast<std::size_t>(*v);
    };
    const auto set_bind = [&](std::string_view value) {
        const auto colon = value.rfind(':');
        if (colon == std::string_view::npos) {
            config.bind_addr = std::string(value);
            return;
        }
        config.bind_addr = std::string(value.substr(0, colon));
        config.port = static_cast<int>(to_size("port", value.substr(colon + 1)));
    };

    if (file) {
        std::ifstream in(*file);
        if (!in) throw ArgumentError("cannot open config file " + file->string());
        std::string line;
        while (std::getline(in, line)) {
            const auto hash = line.find('#');
            const auto body = text::trim(std::string_view(line).substr(0, hash));
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string_view::npos) throw ArgumentError("config: expected key=value, got '" + std::string(body) + "'");
            const std::string key(text::trim(body.substr(0, eq)));
            const auto value = text::trim(body.substr(eq + 1));
            if (key == "bind_addr") {
                set_bind(value);
            } else if (key == "port") {
                config.port = static_cast<int>(to_size(key, value));
            } else if (key == "data_dir") {
                config.data_dir = std::string(value);
            } else if (key == "max_upload_mib") {
                config.max_upload_mib = to_size(key, value);
            } else if (key == "workers") {
                config.workers = std::max<std::size_t>(1, to_size(key, value));
            } else if (key == "http_threads") {
                config.http_threads = std::max<std::size_t>(1, to_size(key, value));
            } else {
                throw ArgumentError("config: unknown key '" + key + "'");
            }
        }
    }
    if (const char* v = std::getenv("BIND_ADDR"); v && *v) set_bind(v);
    if (const char* v = std::getenv("DATA_DIR"); v && *v) config.data_dir = v;
    if (const char* v = std::getenv("MAX_UPLOAD_MIB"); v && *v) config.max_upload_mib = to_size("MAX_UPLOAD_MIB", v);
    return config;
}

namespace {

struct ApiError {
    int status;
    std::string code;
    std::string message;
    json detail = json::object();
};

json error_body(const std::string& code, const std::string& message, json detail = json::object()) {
    return json{{"code", code}, {"message", message}, {"detail", std::move(detail)}};
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 14695981039346656037ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return out;
}

/// Fixed number of threads draining a FIFO of jobs.
class WorkerPool {
public:
    explicit WorkerPool(std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) threads_.emplace_back([this] { run(); });
    }
    ~WorkerPool() {
        {
            std::lock_guard lock(mutex_);
            stopping_ = true;
        }
        wake_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void submit(std::function<void()> job) {
        {
            std::lock_guard lock(mutex_);
            queue_.push_back(std::move(job));
        }
        wake_.notify_one();
    }

    void wait_idle() {
        std::unique_lock lock(mutex_);
        idle_.wait(lock, [this] { return queue_.empty() && active_ == 0; });
    }

private:
    void run() {
        for (;;) {
            std::function<void()> job;
            {
                std::unique_lock lock(mutex_);
                wake_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
                if (queue_.empty()) return;
                job = std::move(queue_.front());
                queue_.pop_front();
                ++active_;
            }
            job();
            {
                std::lock_guard lock(mutex_);
                --active_;
            }
            idle_.notify_all();
        }
    }

    std::mutex mutex_;
    std::condition_variable wake_, idle_;
    std::deque<std::function<void()>> queue_;
    std::size_t active_ = 0;
    bool stopping_ = false;
    std::vector<std::thread> threads_;
};

struct CohortEntry {
    std::string id;
    std::string hash;
    std::shared_ptr<const Cohort> cohort;
};

struct ModelEntry {
    std::string id;
    std::string cohort_id;
    std::string status;  // pending | ready | failed
    std::string error_code;
    std::string error;
    PipelineOptions options;
    std::shared_ptr<const PipelineModel> model;
    std::shared_ptr<const IndexReport> report;
};

std::string options_hash_input(const PipelineOptions& o) {
    std::string s = text::format_double(o.omega) + "|" + std::string(side_code(o.pelvis_side)) + "|" +
                    std::string(smoothing_name(o.smoothing));
    for (Mode m : o.modes) s += "|" + std::string(mode_name(m));
    return s;
}

json options_json(const PipelineOptions& o) {
    json modes = json::array();
    for (Mode m : o.modes) modes.push_back(std::string(mode_name(m)));
    return {{"omega", o.omega},
            {"modes", modes},
            {"pelvis_side", std::string(side_code(o.pelvis_side))},
            {"smoothing", std::string(smoothing_name(o.smoothing))}};
}

json components_json(const PipelineModel& model) {
    json out = json::object();
    for (Mode m : model.options.modes) {
        if (m == Mode::per_joint) {
            json per = json::object();
            for (const auto& v : variable_set_for(m, model.options.pelvis_side).members()) {
                per[v.label()] = model.fpca(v).components();
            }
            out["per_joint"] = per;
        } else {
            const auto& mf = model.mfpca(m);
            out[std::string(mode_name(m))] = {{"W", mf.components()}, {"K_plus", mf.source.k_plus()}};
        }
    }
    return out;
}

std::string write_text_atomically(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write " + tmp);
        out << content;
    }
    std::filesystem::rename(tmp, path);
    return path.string();
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

const std::string& openapi_document() {
    static const std::string doc = R"JSON({
  "openapi": "3.0.3",
  "info": {"title": "gaitdex service", "version": "1.0.0"},
  "components": {
    "schemas": {
      "Error": {
        "type": "object",
        "required": ["code", "message", "detail"],
        "properties": {"code": {"type": "string"}, "message": {"type": "string"}, "detail": {"type": "object"}}
      }
    }
  },
  "paths": {
    "/cohorts": {
      "post": {
        "summary": "Upload a wide-CSV cohort, as multipart fields 'cohort' and optional 'metadata' or as a raw text/csv body",
        "responses": {
          "200": {"description": "{cohort_id, n_subjects, n_healthy, T, n_variables}"},
          "400": {"description": "parse or data error naming the offending row and column"},
          "413": {"description": "upload exceeds the configured size limit"}
        }
      }
    },
    "/cohorts/{id}": {
      "get": {"summary": "Cohort summary", "responses": {"200": {"description": "summary"}, "404": {"description": "unknown cohort"}}}
    },
    "/cohorts/{id}/fit": {
      "post": {
        "summary": "Fit the pipeline. Body {omega, modes, pelvis_side, smoothing, async}",
        "responses": {
          "200": {"description": "{model_id, status, components}"},
          "202": {"description": "async fit queued; poll GET /models/{id}"},
          "404": {"description": "unknown cohort"},
          "422": {"description": "invalid options or degenerate fit"}
        }
      }
    },
    "/models/{id}": {
      "get": {"summary": "Model status (pending, ready, failed) and component counts", "responses": {"200": {"description": "status"}, "404": {"description": "unknown model"}}}
    },
    "/models/{id}/subjects/{sid}/report": {
      "get": {
        "summary": "Per-subject index slice for one mode",
        "parameters": [{"name": "mode", "in": "query", "schema": {"type": "string", "enum": ["combined", "left", "right", "per_joint"]}}],
        "responses": {"200": {"description": "sFGDI, MAP, GPS, OA, GDI"}, "404": {"description": "unknown model or subject"}, "409": {"description": "mode not fitted or model not ready"}}
      }
    },
    "/models/{id}/subjects/{sid}/curves": {
      "get": {
        "summary": "Observed curve, healthy mean and pointwise min/max band, optional reconstruction",
        "parameters": [
          {"name": "variable", "in": "query", "required": true, "schema": {"type": "string"}},
          {"name": "with_reconstruction", "in": "query", "schema": {"type": "boolean"}}
        ],
        "responses": {"200": {"description": "curves"}, "404": {"description": "unknown model or subject"}, "409": {"description": "variable not in the fitted set"}}
      }
    },
    "/models/{id}/compare": {
      "get": {
        "summary": "Paired MAP vectors of two subjects",
        "parameters": [
          {"name": "sid_a", "in": "query", "required": true, "schema": {"type": "string"}},
          {"name": "sid_b", "in": "query", "required": true, "schema": {"type": "string"}},
          {"name": "mode", "in": "query", "schema": {"type": "string"}}
        ],
        "responses": {"200": {"description": "both subject report slices and aligned MAP vectors"}, "404": {"description": "unknown model or subject"}, "409": {"description": "mode not fitted"}}
      }
    },
    "/openapi.json": {"get": {"summary": "This document", "responses": {"200": {"description": "OpenAPI document"}}}}
  }
}
)JSON";
    return doc;
}

// ---------------------------------------------------------------------------

struct GaitService::Impl {
    ServiceConfig config;
    httplib::Server server;
    WorkerPool pool;

    mutable std::shared_mutex mutex;
    std::map<std::string, CohortEntry> cohorts;
    std::map<std::string, std::shared_ptr<const ModelEntry>> models;
    std::uint64_t sequence = 0;

    explicit Impl(ServiceConfig c) : config(std::move(c)), pool(std::max<std::size_t>(1, config.workers)) {
        restore();
        routes();
    }

    std::string next_id(char prefix, std::uint64_t hash) {
        std::unique_lock lock(mutex);
        return std::string(1, prefix) + hex(hash).substr(0, 12) + "-" + std::to_string(++sequence);
    }

    void note_sequence(const std::string& id) {
        const auto dash = id.rfind('-');
        if (dash == std::string::npos) return;
        if (const auto n = text::parse_int(std::string_view(id).substr(dash + 1)); n && *n > 0) {
            sequence = std::max(sequence, static_cast<std::uint64_t>(*n));
        }
    }

    // --- persistence --------------------------------------------------------

    bool persistent() const { return !config.data_dir.empty(); }

    void persist_cohort(const CohortEntry& entry) {
        if (!persistent()) return;
        const auto blob = config.data_dir / "blobs" / (entry.hash + ".csv");
        if (!std::filesystem::exists(blob)) {
            std::ostringstream data;
            save_cohort(*entry.cohort, data);
            write_text_atomically(blob, data.str());
            std::ostringstream meta;
            save_metadata(*entry.cohort, meta);
            write_text_atomically(config.data_dir / "blobs" / (entry.hash + ".metadata.csv"), meta.str());
        }
        write_text_atomically(config.data_dir / "cohorts" / (entry.id + ".json"),
                              json{{"id", entry.id}, {"hash", entry.hash}}.dump());
    }

    void persist_model(const ModelEntry& entry) {
        if (!persistent() || entry.status != "ready") return;
        const json doc{{"id", entry.id}, {"cohort_id", entry.cohort_id}, {"model", to_json(*entry.model)}};
        write_text_atomically(config.data_dir / "models" / (entry.id + ".json"), doc.dump());
    }

    void restore() {
        if (!persistent()) return;
        std::filesystem::create_directories(config.data_dir);
        const auto cohort_dir = config.data_dir / "cohorts";
        if (std::filesystem::exists(cohort_dir)) {
            for (const auto& f : std::filesystem::directory_iterator(cohort_dir)) {
                if (f.path().extension() != ".json") continue;
                const auto doc = json::parse(read_text(f.path()));
                CohortEntry entry{doc.at("id").get<std::string>(), doc.at("hash").get<std::string>(), nullptr};
                const auto blob = config.data_dir / "blobs" / entry.hash;
                entry.cohort = std::make_shared<const Cohort>(
                    load_cohort(blob.string() + ".csv", std::filesystem::path(blob.string() + ".metadata.csv")));
                note_sequence(entry.id);
                cohorts.emplace(entry.id, std::move(entry));
            }
        }
        const auto model_dir = config.data_dir / "models";
        if (std::filesystem::exists(model_dir)) {
            for (const auto& f : std::filesystem::directory_iterator(model_dir)) {
                if (f.path().extension() != ".json") continue;
                const auto doc = json::parse(read_text(f.path()));
                auto entry = std::make_shared<ModelEntry>();
                entry->id = doc.at("id").get<std::string>();
                entry->cohort_id = doc.at("cohort_id").get<std::string>();
                const auto cohort = cohorts.find(entry->cohort_id);
                if (cohort == cohorts.end()) continue;
                entry->model = std::make_shared<const PipelineModel>(pipeline_from_json(doc.at("model")));
                entry->options = entry->model->options;
                entry->report = std::make_shared<const IndexReport>(score(*entry->model, *cohort->second.cohort));
                entry->status = "ready";
                note_sequence(entry->id);
                models.emplace(entry->id, std::move(entry));
            }
        }
    }

    // --- computation --------------------------------------------------------

    IndexReport score(const PipelineModel& model, const Cohort& cohort) const {
        ReportOptions options;
        options.indices = {true, true, true, true};
        std::string basis_notice;
        try {
            const auto published = config.data_dir / "gdi_features_51x9.csv";
            if (!config.data_dir.empty() && std::filesystem::exists(published)) {
                options.gdi_basis = load_gdi_basis(published);
            } else {
                const std::size_t t = 51;
                options.gdi_basis =
                    surrogate_gdi_basis(cohort.grid().size() == t ? cohort : resample(cohort, t), 15);
            }
        } catch (const Error& e) {
            options.indices.gdi = false;
            basis_notice = std::string("GDI skipped: ") + e.what();
        }
        IndexReport report;
        try {
            report = build_report(model, cohort, options);
        } catch (const Error& e) {
            options.indices = {true, false, false, false};
            report = build_report(model, cohort, options);
            report.notices.push_back(std::string("reference indices skipped: ") + e.what());
        }
        if (!basis_notice.empty()) report.notices.push_back(basis_notice);
        return report;
    }

    // --- lookups -------------------------------------------------------------

    CohortEntry cohort_entry(const std::string& id) const {
        std::shared_lock lock(mutex);
        const auto it = cohorts.find(id);
        if (it == cohorts.end()) throw ApiError{404, "unknown_cohort", "no cohort with id '" + id + "'", {{"cohort_id", id}}};
        return it->second;
    }

    std::shared_ptr<const ModelEntry> model_entry(const std::string& id) const {
        std::shared_lock lock(mutex);
        const auto it = models.find(id);
        if (it == models.end()) throw ApiError{404, "unknown_model", "no model with id '" + id + "'", {{"model_id", id}}};
        return it->second;
    }

    std::shared_ptr<const ModelEntry> ready_model(const std::string& id) const {
        auto entry = model_entry(id);
        if (entry->status != "ready") {
            throw ApiError{409, "model_not_ready", "model '" + id + "' is " + entry->status,
                           {{"model_id", id}, {"status", entry->status}}};
        }
        return entry;
    }

    static std::size_t subject_index(const ModelEntry& entry, const std::string& sid) {
        const auto i = entry.report->find_subject(sid);
        if (!i) throw ApiError{404, "unknown_subject", "no subject '" + sid + "' in model", {{"subject_id", sid}}};
        return *i;
    }

    static Mode requested_mode(const httplib::Request& req, const ModelEntry& entry) {
        const auto& modes = entry.model->options.modes;
        if (!req.has_param("mode")) {
            return entry.model->has_mode(Mode::combined) ? Mode::combined : modes.front();
        }
        const auto name = req.get_param_value("mode");
        const auto mode = parse_mode(name);
        if (!mode) throw ApiError{400, "bad_request", "unknown mode '" + name + "'", {{"mode", name}}};
        if (!entry.model->has_mode(*mode)) {
            json fitted = json::array();
            for (Mode m : modes) fitted.push_back(std::string(mode_name(m)));
            throw ApiError{409, "mode_not_fitted", "mode '" + name + "' was not fitted for this model",
                           {{"mode", name}, {"fitted_modes", fitted}}};
        }
        return *mode;
    }

    static std::string required_param(const httplib::Request& req, const char* name) {
        if (!req.has_param(name)) {
            throw ApiError{400, "bad_request", std::string("missing query parameter '") + name + "'", {{"parameter", name}}};
        }
        return req.get_param_value(name);
    }

    json model_summary(const ModelEntry& entry) const {
        json out{{"model_id", entry.id},
                 {"cohort_id", entry.cohort_id},
                 {"status", entry.status},
                 {"options", options_json(entry.options)}};
        if (entry.status == "ready") {
            out["components"] = components_json(*entry.model);
            json univariate = json::object();
            for (const auto& [v, f] : entry.model->univariate) univariate[v.label()] = f.components();
            out["univariate_components"] = univariate;
            out["warnings"] = entry.model->warnings;
            out["notices"] = entry.report->notices;
            out["gdi_basis"] = entry.report->gdi_basis
                                   ? json(std::string(basis_source_name(*entry.report->gdi_basis)))
                                   : json(nullptr);
        } else if (entry.status == "failed") {
            out["error"] = error_body(entry.error_code, entry.error);
        }
        return out;
    }

    // --- handlers -----------------------------------------------------------

    json upload(const httplib::Request& req) {
        const std::size_t limit = config.max_upload_mib * 1024 * 1024;
        if (req.body.size() > limit) {
            throw ApiError{413, "payload_too_large", "upload exceeds " + std::to_string(config.max_upload_mib) + " MiB",
                           {{"limit_bytes", limit}}};
        }
        std::string data, metadata;
        bool has_metadata = false;
        if (req.is_multipart_form_data()) {
            if (!req.has_file("cohort")) {
                throw ApiError{400, "bad_request", "multipart upload needs a 'cohort' field", json::object()};
            }
            data = req.get_file_value("cohort").content;
            if (req.has_file("metadata")) {
                metadata = req.get_file_value("metadata").content;
                has_metadata = true;
            }
        } else {
            data = req.body;
        }

        std::istringstream data_in(data), meta_in(metadata);
        Cohort cohort = parse_cohort(data_in, has_metadata ? &meta_in : nullptr);

        std::ostringstream canonical;
        save_cohort(cohort, canonical);
        save_metadata(cohort, canonical);
        const auto hash = fnv1a(canonical.str());
        CohortEntry entry{next_id('c', hash), hex(hash), std::make_shared<const Cohort>(std::move(cohort))};
        persist_cohort(entry);
        const json summary = cohort_summary(entry);
        {
            std::unique_lock lock(mutex);
            cohorts.emplace(entry.id, entry);
        }
        return summary;
    }

    static json cohort_summary(const CohortEntry& entry) {
        std::set<VariableId> variables;
        for (const auto& s : entry.cohort->subjects()) {
            for (const auto& [v, c] : s.curves) variables.insert(v);
        }
        return {{"cohort_id", entry.id},
                {"n_subjects", entry.cohort->size()},
                {"n_healthy", entry.cohort->healthy_count()},
                {"T", entry.cohort->grid().size()},
                {"n_variables", variables.size()}};
    }

    static PipelineOptions parse_fit_request(const json& body) {
        const auto invalid = [](const std::string& message, json detail = json::object()) {
            return ApiError{422, "invalid_argument", message, std::move(detail)};
        };
        if (!body.is_object()) throw invalid("fit body must be a JSON object");
        PipelineOptions options;
        if (body.contains("omega")) {
            if (!body["omega"].is_number()) throw invalid("omega must be a number");
            options.omega = body["omega"].get<double>();
            if (!(options.omega > 0.0 && options.omega <= 1.0)) {
                throw invalid("omega must lie in (0, 1]", {{"omega", options.omega}});
            }
        }
        if (body.contains("modes")) {
            if (!body["modes"].is_array()) throw invalid("modes must be an array of mode names");
            options.modes.clear();
            for (const auto& m : body["modes"]) {
                const auto mode = m.is_string() ? parse_mode(m.get<std::string>()) : std::nullopt;
                if (!mode) throw invalid("unknown mode " + m.dump(), {{"mode", m}});
                options.modes.push_back(*mode);
            }
            if (options.modes.empty()) throw invalid("no modes requested");
        }
        if (body.contains("pelvis_side")) {
            const auto side = body["pelvis_side"].is_string() ? body["pelvis_side"].get<std::string>() : "";
            if (side == "L" || side == "left") {
                options.pelvis_side = Side::left;
            } else if (side == "R" || side == "right") {
                options.pelvis_side = Side::right;
            } else {
                throw invalid("pelvis_side must be left or right", {{"pelvis_side", body["pelvis_side"]}});
            }
        }
        if (body.contains("smoothing")) {
            const auto s = body["smoothing"].is_string() ? parse_smoothing(body["smoothing"].get<std::string>())
                                                         : std::nullopt;
            if (!s) throw invalid("smoothing must be none or penalized");
            options.smoothing = *s;
        }
        return options;
    }

    std::pair<int, json> fit(const std::string& cohort_id, const std::string& body_text) {
        const auto cohort = cohort_entry(cohort_id);
        json body = json::object();
        if (!text::trim(body_text).empty()) {
            try {
                body = json::parse(body_text);
            } catch (const json::exception& e) {
                throw ApiError{400, "bad_request", "fit body is not valid JSON", {{"parse_error", e.what()}}};
            }
        }
        const auto options = parse_fit_request(body);
        const bool async = body.is_object() && body.value("async", false);

        const auto hash = fnv1a(options_hash_input(options), fnv1a(cohort.hash));
        auto pending = std::make_shared<ModelEntry>();
        pending->id = next_id('m', hash);
        pending->cohort_id = cohort_id;
        pending->status = "pending";
        pending->options = options;
        {
            std::unique_lock lock(mutex);
            models.emplace(pending->id, pending);
        }

        auto done = std::make_shared<std::promise<std::shared_ptr<const ModelEntry>>>();
        auto finished = done->get_future();
        pool.submit([this, cohort, pending, done] {
            auto result = std::make_shared<ModelEntry>(*pending);
            try {
                auto model = fit_pipeline(*cohort.cohort, pending->options);
                result->report = std::make_shared<const IndexReport>(score(model, *cohort.cohort));
                result->model = std::make_shared<const PipelineModel>(std::move(model));
                result->options = result->model->options;
                result->status = "ready";
            } catch (const DegenerateError& e) {
                result->status = "failed";
                result->error_code = "degenerate_fit";
                result->error = e.what();
            } catch (const Error& e) {
                result->status = "failed";
                result->error_code = "fit_failed";
                result->error = e.what();
            } catch (const std::exception& e) {
                result->status = "failed";
                result->error_code = "internal_error";
                result->error = e.what();
            }
            try {
                persist_model(*result);
            } catch (const std::exception& e) {
                result->status = "failed";
                result->error_code = "internal_error";
                result->error = std::string("could not persist model: ") + e.what();
            }
            {
                std::unique_lock lock(mutex);
                models[result->id] = result;
            }
            done->set_value(result);
        });

        if (async) return {202, {{"model_id", pending->id}, {"status", "pending"}}};
        const auto entry = finished.get();
        if (entry->status == "failed") {
            const int status = entry->error_code == "internal_error" ? 500 : 422;
            throw ApiError{status, entry->error_code, entry->error, {{"model_id", entry->id}}};
        }
        return {200, model_summary(*entry)};
    }

    json curves(const ModelEntry& entry, std::size_t subject, const httplib::Request& req) const {
        const auto label = required_param(req, "variable");
        const auto variable = parse_variable_label(label);
        if (!variable) throw ApiError{400, "bad_request", "unknown variable '" + label + "'", {{"variable", label}}};
        const auto it = entry.model->univariate.find(*variable);
        if (it == entry.model->univariate.end()) {
            throw ApiError{409, "variable_not_fitted", "variable '" + label + "' is not in the fitted set",
                           {{"variable", label}}};
        }
        bool with_reconstruction = false;
        if (req.has_param("with_reconstruction")) {
            const auto v = req.get_param_value("with_reconstruction");
            if (v == "true" || v == "1") {
                with_reconstruction = true;
            } else if (v != "false" && v != "0") {
                throw ApiError{400, "bad_request", "with_reconstruction must be true or false", json::object()};
            }
        }

        const Cohort& cohort = *cohort_entry(entry.cohort_id).cohort;
        const auto observed = cohort.subject(subject).curve(*variable);
        const Eigen::VectorXd mean = healthy_mean_curve(cohort, *variable);
        const auto t = cohort.grid().size();
        std::vector<double> lower(t, std::numeric_limits<double>::infinity());
        std::vector<double> upper(t, -std::numeric_limits<double>::infinity());
        for (const auto& s : cohort.subjects()) {
            if (!s.healthy) continue;
            const auto c = s.curve(*variable);
            for (std::size_t l = 0; l < t; ++l) {
                lower[l] = std::min(lower[l], c[l]);
                upper[l] = std::max(upper[l], c[l]);
            }
        }
        json out{{"subject_id", cohort.subject(subject).subject_id},
                 {"variable", label},
                 {"display_name", variable->display_name()},
                 {"grid", cohort.grid().positions()},
                 {"observed", std::vector<double>(observed.begin(), observed.end())},
                 {"healthy_mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
                 {"healthy_band", {{"type", "pointwise_min_max"}, {"lower", lower}, {"upper", upper}}}};
        if (with_reconstruction) {
            const auto& fpca = it->second;
            const Eigen::VectorXd approx = reconstruct(fpca, subject, fpca.components());
            out["reconstruction"] = {
                {"values", std::vector<double>(approx.data(), approx.data() + approx.size())},
                {"components", fpca.components()},
                {"rmse", rmse(observed, std::span<const double>(approx.data(), static_cast<std::size_t>(approx.size())))}};
        }
        return out;
    }

    // --- routing ------------------------------------------------------------

    using Handler = std::function<std::pair<int, json>(const httplib::Request&)>;

    static void respond(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static httplib::Server::Handler wrap(Handler handler) {
        return [handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
            try {
                const auto [status, body] = handler(req);
                respond(res, status, body);
            } catch (const ApiError& e) {
                respond(res, e.status, error_body(e.code, e.message, e.detail));
            } catch (const ParseError& e) {
                respond(res, 400, error_body("parse_error", e.what()));
            } catch (const DataError& e) {
                respond(res, 400, error_body("data_error", e.what()));
            } catch (const ArgumentError& e) {
                respond(res, 400, error_body("invalid_argument", e.what()));
            } catch (const DegenerateError& e) {
                respond(res, 422, error_body("degenerate", e.what()));
            } catch (const std::exception& e) {
                respond(res, 500, error_body("internal_error", e.what()));
            }
        };
    }

    void routes() {
        server.new_task_queue = [n = config.http_threads] { return new httplib::ThreadPool(n); };
        server.set_payload_max_length(config.max_upload_mib * 1024 * 1024);
        server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (!res.body.empty()) return;
            const std::string code = res.status == 413   ? "payload_too_large"
                                     : res.status == 404 ? "not_found"
                                                         : "http_error";
            respond(res, res.status, error_body(code, httplib::status_message(res.status), {{"path", req.path}}));
        });

        server.Post("/cohorts", wrap([this](const httplib::Request& req) { return std::pair{200, upload(req)}; }));
        server.Get("/cohorts/:id", wrap([this](const httplib::Request& req) {
                       return std::pair{200, cohort_summary(cohort_entry(req.path_params.at("id")))};
                   }));
        server.Post("/cohorts/:id/fit", wrap([this](const httplib::Request& req) {
                        return fit(req.path_params.at("id"), req.body);
                    }));
        server.Get("/models/:id", wrap([this](const httplib::Request& req) {
                       return std::pair{200, model_summary(*model_entry(req.path_params.at("id")))};
                   }));
        server.Get("/models/:id/subjects/:sid/report", wrap([this](const httplib::Request& req) {
                       const auto entry = ready_model(req.path_params.at("id"));
                       const auto i = subject_index(*entry, req.path_params.at("sid"));
                       const Mode mode = requested_mode(req, *entry);
                       return std::pair{200, subject_report_json(*entry->report, *entry->model, i, mode)};
                   }));
        server.Get("/models/:id/subjects/:sid/curves", wrap([this](const httplib::Request& req) {
                       const auto entry = ready_model(req.path_params.at("id"));
                       const auto i = subject_index(*entry, req.path_params.at("sid"));
                       return std::pair{200, curves(*entry, i, req)};
                   }));
        server.Get("/models/:id/compare", wrap([this](const httplib::Request& req) {
                       const auto entry = ready_model(req.path_params.at("id"));
                       const auto a = subject_index(*entry, required_param(req, "sid_a"));
                       const auto b = subject_index(*entry, required_param(req, "sid_b"));
                       const Mode mode = requested_mode(req, *entry);
                       auto slice_a = subject_report_json(*entry->report, *entry->model, a, mode);
                       auto slice_b = subject_report_json(*entry->report, *entry->model, b, mode);
                       json map_a = json::array(), map_b = json::array();
                       for (const auto& label : slice_a["map_variables"]) {
                           map_a.push_back(slice_a["map"][label.get<std::string>()]);
                           map_b.push_back(slice_b["map"][label.get<std::string>()]);
                       }
                       return std::pair{200, json{{"mode", std::string(mode_name(mode))},
                                                  {"variables", slice_a["map_variables"]},
                                                  {"map_a", map_a},
                                                  {"map_b", map_b},
                                                  {"subject_a", slice_a},
                                                  {"subject_b", slice_b}}};
                   }));
        server.Get("/openapi.json", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(openapi_document(), "application/json");
        });
    }
};

GaitService::GaitService(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}
GaitService::~GaitService() {
    impl_->server.stop();
    impl_->pool.wait_idle();
}

const ServiceConfig& GaitService::config() const { return impl_->config; }
httplib::Server& GaitService::server() { return impl_->server; }

int GaitService::bind() {
    auto& c = impl_->config;
    if (c.port == 0) {
        c.port = impl_->server.bind_to_any_port(c.bind_addr);
        if (c.port < 0) throw Error("cannot bind to " + c.bind_addr);
        return c.port;
    }
    if (!impl_->server.bind_to_port(c.bind_addr, c.port)) {
        throw Error("cannot bind to " + c.bind_addr + ":" + std::to_string(c.port));
    }
    return c.port;
}

bool GaitService::listen_after_bind() { return impl_->server.listen_after_bind(); }
void GaitService::stop() { impl_->server.stop(); }
void GaitService::wait_idle() { impl_->pool.wait_idle(); }

}  // namespace gaitdex
