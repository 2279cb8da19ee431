#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <sstream>
#include <thread>

#include "gaitdex/gait_data.hpp"
#include "gaitdex/service.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>
#include <nlohmann/json.hpp>

using namespace gaitdex;
using nlohmann::json;

namespace {

class Running {
public:
    explicit Running(ServiceConfig config) : service_(std::move(config)) {
        service_.config();
        port_ = service_.bind();
        thread_ = std::thread([this] { service_.listen_after_bind(); });
        while (!service_.server().is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    ~Running() {
        service_.stop();
        thread_.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(300, 0);
        return c;
    }

private:
    GaitService service_;
    int port_ = 0;
    std::thread thread_;
};

ServiceConfig test_config(const std::filesystem::path& dir = {}) {
    ServiceConfig c;
    c.port = 0;
    c.data_dir = dir;
    c.max_upload_mib = 1;
    return c;
}

std::string cohort_csv(std::uint64_t seed, std::size_t nh, std::size_t np, std::size_t t = 51) {
    std::ostringstream out;
    save_cohort(synth_cohort(seed, nh, np, GridSpec(t), 1.0), out);
    return out.str();
}

json body_of(const httplib::Result& r) {
    EXPECT_TRUE(r);
    return json::parse(r->body);
}

std::string upload(httplib::Client& c, const std::string& csv) {
    const auto r = c.Post("/cohorts", csv, "text/csv");
    EXPECT_EQ(r->status, 200) << r->body;
    return body_of(r)["cohort_id"].get<std::string>();
}

std::string fit(httplib::Client& c, const std::string& cohort, const json& body) {
    const auto r = c.Post("/cohorts/" + cohort + "/fit", body.dump(), "application/json");
    EXPECT_EQ(r->status, 200) << r->body;
    return body_of(r)["model_id"].get<std::string>();
}

void expect_error(const httplib::Result& r, int status, const std::string& code) {
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, status) << r->body;
    const auto j = json::parse(r->body);
    EXPECT_EQ(j["code"], code) << r->body;
    EXPECT_TRUE(j.contains("message"));
    EXPECT_TRUE(j.contains("detail"));
}

}  // namespace

TEST(Service, Config) {
    setenv("BIND_ADDR", "0.0.0.0:9123", 1);
    setenv("MAX_UPLOAD_MIB", "7", 1);
    const auto c = load_service_config(std::nullopt);
    unsetenv("BIND_ADDR");
    unsetenv("MAX_UPLOAD_MIB");
    EXPECT_EQ(c.bind_addr, "0.0.0.0");
    EXPECT_EQ(c.port, 9123);
    EXPECT_EQ(c.max_upload_mib, 7u);
    EXPECT_NO_THROW(json::parse(openapi_document()));
}

TEST(Service, RoundTrip) {
    Running server(test_config());
    auto c = server.client();
    const auto cohort = upload(c, cohort_csv(1, 15, 8));
    const auto info = body_of(c.Get("/cohorts/" + cohort));
    EXPECT_EQ(info["n_subjects"], 23);
    EXPECT_EQ(info["n_healthy"], 15);
    EXPECT_EQ(info["T"], 51);

    const auto model = fit(c, cohort, {{"omega", 0.99}, {"modes", {"combined", "left", "per_joint"}}});
    const auto summary = body_of(c.Get("/models/" + model));
    EXPECT_EQ(summary["status"], "ready");
    EXPECT_TRUE(summary["components"].contains("combined"));

    const auto rep = body_of(c.Get("/models/" + model + "/subjects/P2/report?mode=left"));
    EXPECT_EQ(rep["subject_id"], "P2");
    EXPECT_EQ(rep["mode"], "left");
    EXPECT_TRUE(rep["fgdi"].is_number());
    EXPECT_TRUE(rep["sfgdi"].is_number());
    EXPECT_EQ(rep["map_variables"].size(), 9u);
    EXPECT_TRUE(rep["gps"].is_number());
    EXPECT_TRUE(rep["oa"].is_number());

    const auto curves = body_of(c.Get("/models/" + model + "/subjects/H1/curves?variable=L_knee_flexion&with_reconstruction=true"));
    EXPECT_EQ(curves["grid"].size(), 51u);
    EXPECT_EQ(curves["observed"].size(), 51u);
    EXPECT_EQ(curves["healthy_mean"].size(), 51u);
    EXPECT_EQ(curves["healthy_band"]["lower"].size(), 51u);
    EXPECT_EQ(curves["reconstruction"]["values"].size(), 51u);
    EXPECT_GE(curves["reconstruction"]["rmse"].get<double>(), 0.0);
    for (std::size_t l = 0; l < 51; ++l) {
        EXPECT_LE(curves["healthy_band"]["lower"][l].get<double>(), curves["healthy_mean"][l].get<double>());
        EXPECT_GE(curves["healthy_band"]["upper"][l].get<double>(), curves["healthy_mean"][l].get<double>());
    }

    const auto cmp = body_of(c.Get("/models/" + model + "/compare?sid_a=H1&sid_b=P2&mode=combined"));
    EXPECT_EQ(cmp["variables"].size(), 15u);
    EXPECT_EQ(cmp["map_a"].size(), 15u);
    EXPECT_EQ(cmp["map_b"].size(), 15u);

    // Repeated reads are byte-identical.
    const auto url = "/models/" + model + "/subjects/P3/report?mode=combined";
    EXPECT_EQ(c.Get(url)->body, c.Get(url)->body);

    // The same content uploaded twice yields distinct ids.
    EXPECT_NE(upload(c, cohort_csv(1, 15, 8)), cohort);
}

TEST(Service, Errors) {
    Running server(test_config());
    auto c = server.client();
    const auto cohort = upload(c, cohort_csv(2, 10, 5, 31));
    const auto model = fit(c, cohort, {{"modes", {"combined"}}});

    expect_error(c.Get("/cohorts/nope"), 404, "unknown_cohort");
    expect_error(c.Get("/models/nope"), 404, "unknown_model");
    expect_error(c.Get("/models/" + model + "/subjects/ZZZ/report"), 404, "unknown_subject");
    expect_error(c.Get("/models/" + model + "/subjects/H1/report?mode=sideways"), 400, "bad_request");
    expect_error(c.Get("/models/" + model + "/subjects/H1/report?mode=left"), 409, "mode_not_fitted");
    expect_error(c.Get("/models/" + model + "/subjects/H1/curves?variable=bogus"), 400, "bad_request");
    expect_error(c.Post("/cohorts/" + cohort + "/fit", json{{"modes", json::array()}}.dump(), "application/json"), 422,
                 "invalid_argument");
    const auto no_modes = c.Post("/cohorts/" + cohort + "/fit", json{{"modes", json::array()}}.dump(), "application/json");
    EXPECT_NE(no_modes->body.find("no modes requested"), std::string::npos);
    expect_error(c.Post("/cohorts/" + cohort + "/fit", json{{"omega", 1.5}}.dump(), "application/json"), 422,
                 "invalid_argument");
    expect_error(c.Post("/cohorts/nope/fit", "{}", "application/json"), 404, "unknown_cohort");

    auto csv = cohort_csv(3, 4, 1, 11);
    const auto line_end = csv.find('\n');
    auto pos = csv.find(',', line_end);
    for (int k = 0; k < 5; ++k) pos = csv.find(',', pos + 1);
    const auto end = csv.find_first_of(",\n", pos + 1);
    csv.replace(pos + 1, end - pos - 1, "NaN");
    const auto nan = c.Post("/cohorts", csv, "text/csv");
    ASSERT_EQ(nan->status, 400);
    EXPECT_NE(nan->body.find("non-finite"), std::string::npos) << nan->body;

    const std::string big(2 * 1024 * 1024, 'x');
    const auto too_big = c.Post("/cohorts", big, "text/csv");
    ASSERT_TRUE(too_big);
    EXPECT_EQ(too_big->status, 413);
}

TEST(Service, AsyncFitAndPersistence) {
    const auto dir = std::filesystem::temp_directory_path() / "gaitdex_service_test";
    std::filesystem::remove_all(dir);
    std::string model, report;
    {
        Running server(test_config(dir));
        auto c = server.client();
        const auto cohort = upload(c, cohort_csv(4, 12, 6, 41));
        const auto r = c.Post("/cohorts/" + cohort + "/fit", json{{"async", true}}.dump(), "application/json");
        ASSERT_EQ(r->status, 202);
        model = body_of(r)["model_id"].get<std::string>();
        std::string status;
        for (int i = 0; i < 6000 && status != "ready"; ++i) {
            status = body_of(c.Get("/models/" + model))["status"].get<std::string>();
            if (status == "pending") std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        ASSERT_EQ(status, "ready");
        report = c.Get("/models/" + model + "/subjects/P1/report")->body;
    }
    {
        Running server(test_config(dir));
        auto c = server.client();
        const auto again = c.Get("/models/" + model + "/subjects/P1/report");
        ASSERT_EQ(again->status, 200) << again->body;
        EXPECT_EQ(again->body, report);
    }
    std::filesystem::remove_all(dir);
}

TEST(Service, DegenerateFit) {
    Running server(test_config());
    auto c = server.client();
    // A single healthy subject cannot anchor a reference.
    const auto cohort = upload(c, cohort_csv(5, 1, 4, 21));
    const auto r = c.Post("/cohorts/" + cohort + "/fit", "{}", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 422) << r->body;
}
