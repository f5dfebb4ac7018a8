#include "agg/agg.h"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<const char*, const char*>> kTiny = {
    {"image_size", "16"},      {"patch_size", "8"},        {"dim", "16"},
    {"heads", "2"},            {"encoder_blocks", "1"},    {"coarse_count", "12"},
    {"geometry_blocks", "1"},  {"texture_blocks", "1"},    {"plane_resolution", "8"},
    {"plane_features", "4"},   {"plane_patch", "4"},       {"decoder_hidden", "8"},
    {"ratio", "2"},            {"sr_channels", "4"},       {"voxel_resolution", "4"},
    {"train_objects", "2"},    {"test_objects", "1"},      {"stored_views", "4"},
    {"render_size", "16"},     {"views_per_iteration", "2"}, {"coarse_epochs", "1"},
    {"sr_epochs", "1"},        {"joint_epochs", "1"},      {"warmup_epochs", "1"},
    {"iterations_per_epoch", "1"}, {"label_iterations", "5"},
};

agg_config* tiny_config() {
    agg_config* c = nullptr;
    EXPECT_EQ(agg_config_create("desk", &c), AGG_OK);
    for (const auto& [k, v] : kTiny) EXPECT_EQ(agg_config_set(c, k, v), AGG_OK) << k;
    return c;
}

void count_lines(const char*, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST(CApi, VersionAndStatusNames) {
    EXPECT_STREQ(agg_version(), "0.1.0");
    EXPECT_STREQ(agg_status_name(AGG_OK), "Ok");
    EXPECT_STRNE(agg_status_name(AGG_ERR_CHECKPOINT_MISMATCH), agg_status_name(AGG_ERR_CONFIG));
}

TEST(CApi, NullArgumentsAreRejected) {
    EXPECT_EQ(agg_config_create("desk", nullptr), AGG_ERR_INVALID_ARGUMENT);
    EXPECT_EQ(agg_gaussians_load_ply(nullptr, nullptr), AGG_ERR_INVALID_ARGUMENT);
    EXPECT_GT(std::strlen(agg_last_error()), 0u);
    EXPECT_EQ(agg_gaussians_count(nullptr), 0u);
    agg_config_destroy(nullptr);
    agg_gaussians_destroy(nullptr);
}

TEST(CApi, ConfigErrorsMapToStatus) {
    agg_config* c = nullptr;
    EXPECT_EQ(agg_config_create("no_such_preset", &c), AGG_ERR_CONFIG);
    ASSERT_EQ(agg_config_create("paper", &c), AGG_OK);
    EXPECT_EQ(agg_config_set(c, "bogus", "1"), AGG_ERR_CONFIG);
    EXPECT_NE(std::string(agg_last_error()).find("bogus"), std::string::npos);
    EXPECT_EQ(agg_config_validate(c), AGG_OK);
    EXPECT_GT(agg_config_key_count(c), 20u);
    EXPECT_EQ(agg_config_key(c, agg_config_key_count(c)), nullptr);

    size_t needed = 0;
    EXPECT_EQ(agg_config_to_text(c, nullptr, 0, &needed), AGG_OK);
    std::string text(needed, '\0');
    EXPECT_EQ(agg_config_to_text(c, text.data(), text.size(), &needed), AGG_OK);
    EXPECT_NE(text.find("coarse_count = 4096"), std::string::npos);
    agg_config_destroy(c);
}

TEST(CApi, MissingFilesReportIoError) {
    agg_gaussians* g = nullptr;
    EXPECT_EQ(agg_gaussians_load_ply("/nonexistent/x.ply", &g), AGG_ERR_IO);
    EXPECT_EQ(g, nullptr);
    agg_image* im = nullptr;
    EXPECT_EQ(agg_image_load_png("/nonexistent/x.png", &im), AGG_ERR_IO);
}

TEST(CApi, GradientCheckPasses) {
    agg_gradcheck_report r{};
    int lines = 0;
    ASSERT_EQ(agg_gradcheck(5, 2, 8, 16, count_lines, &lines, &r), AGG_OK);
    EXPECT_EQ(r.scenes, 2);
    EXPECT_EQ(r.passed, 2);
    EXPECT_GT(r.entries_checked, 0);
    EXPECT_LT(r.max_rel_err, 1e-4);
    EXPECT_EQ(agg_gradcheck(5, 0, 8, 16, nullptr, nullptr, &r), AGG_ERR_INVALID_RANGE);
}

TEST(CApi, EndToEndTinyRun) {
    const fs::path root = fs::temp_directory_path() / ("agg_capi_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::string data = (root / "data").string(), run = (root / "run").string();
    agg_config* c = tiny_config();
    int lines = 0;
    ASSERT_EQ(agg_generate_dataset(c, data.c_str(), count_lines, &lines), AGG_OK) << agg_last_error();
    ASSERT_EQ(agg_fit_labels(c, data.c_str(), 0, nullptr, nullptr), AGG_OK) << agg_last_error();
    agg_train_report tr{};
    ASSERT_EQ(agg_train(c, data.c_str(), run.c_str(), count_lines, &lines, &tr), AGG_OK) << agg_last_error();
    EXPECT_GT(lines, 0);
    EXPECT_EQ(tr.iterations, 3);
    EXPECT_EQ(tr.coarse_frozen_in_stage2, 1);
    EXPECT_TRUE(std::isfinite(tr.final_full_loss));

    agg_model* m = nullptr;
    const std::string ckpt = (root / "run" / "stage3.ckpt").string();
    ASSERT_EQ(agg_model_load(ckpt.c_str(), c, &m), AGG_OK) << agg_last_error();
    EXPECT_EQ(agg_model_stage(m), 3);

    agg_image* input = nullptr;
    const std::string png = (root / "data" / "objects" / "obj_0002" / "views" / "0.png").string();
    ASSERT_EQ(agg_image_load_png(png.c_str(), &input), AGG_OK) << agg_last_error();
    agg_gaussians* g = nullptr;
    agg_infer_report ir{};
    ASSERT_EQ(agg_model_infer(m, input, 0, &g, &ir), AGG_OK) << agg_last_error();
    EXPECT_EQ(ir.forward_passes, 2);
    EXPECT_EQ(ir.optimizer_steps, 0);
    EXPECT_EQ(ir.count, 24u);
    EXPECT_EQ(agg_gaussians_count(g), 24u);

    const std::string ply = (root / "out.ply").string();
    ASSERT_EQ(agg_gaussians_save_ply(g, ply.c_str()), AGG_OK);
    agg_gaussians* back = nullptr;
    ASSERT_EQ(agg_gaussians_load_ply(ply.c_str(), &back), AGG_OK);
    std::vector<double> m1(72), m2(72), c1(72), o1(24);
    double s1 = 0, s2 = 0;
    ASSERT_EQ(agg_gaussians_get(g, m1.data(), c1.data(), o1.data(), &s1), AGG_OK);
    ASSERT_EQ(agg_gaussians_get(back, m2.data(), nullptr, nullptr, &s2), AGG_OK);
    for (int i = 0; i < 72; ++i) EXPECT_NEAR(m1[i], m2[i], 1e-6);
    EXPECT_NEAR(s1, s2, 1e-6);

    agg_image* view = nullptr;
    ASSERT_EQ(agg_render(g, 30.0, 10.0, 2.4, 45.0, 24, &view), AGG_OK);
    int w = 0, h = 0;
    agg_image_size(view, &w, &h);
    EXPECT_EQ(w, 24);
    EXPECT_EQ(h, 24);
    agg_image* bad = nullptr;
    EXPECT_EQ(agg_render(g, 0.0, 0.0, 2.4, 45.0, 0, &bad), AGG_ERR_INVALID_RANGE);
    EXPECT_EQ(bad, nullptr);

    agg_eval_metrics em{};
    ASSERT_EQ(agg_model_evaluate(m, data.c_str(), 0, &em), AGG_OK) << agg_last_error();
    EXPECT_EQ(em.objects, 1);
    EXPECT_EQ(em.views, 3);

    agg_config* other = tiny_config();
    ASSERT_EQ(agg_config_set(other, "coarse_count", "16"), AGG_OK);
    agg_model* wrong = nullptr;
    EXPECT_EQ(agg_model_load(ckpt.c_str(), other, &wrong), AGG_ERR_CHECKPOINT_MISMATCH);
    EXPECT_EQ(wrong, nullptr);

    agg_config_destroy(other);
    agg_image_destroy(view);
    agg_gaussians_destroy(back);
    agg_gaussians_destroy(g);
    agg_image_destroy(input);
    agg_model_destroy(m);
    agg_config_destroy(c);
    fs::remove_all(root);
}
