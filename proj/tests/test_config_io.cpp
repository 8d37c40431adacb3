#include <catch2/catch_amalgamated.hpp>

#include "udaseg/config.hpp"

using namespace udaseg;

TEST_CASE("config serialization round trip is lossless") {
    CliConfig cfg;
    cfg.vae = VaeConfig::desk_scale();
    cfg.seg = SegConfig::desk_scale();
    cfg.run.epochs = 17;
    cfg.run.seeds.data = 101;
    cfg.latent_search.max_iterations = 123;
    cfg.ssim.window_size = 7;
    cfg.synth.n_images = 55;
    cfg.split.train_fraction = 0.75;

    const Json j1 = to_json(cfg);
    const CliConfig parsed = cli_config_from_json(j1);
    const Json j2 = to_json(parsed);
    REQUIRE(j1 == j2);
    REQUIRE(parsed.run.epochs == 17);
    REQUIRE(parsed.latent_search.max_iterations == 123);
    REQUIRE(parsed.ssim.window_size == 7);
}

TEST_CASE("defaults are materialized on serialization") {
    const CliConfig cfg;
    const Json j = to_json(cfg);
    // Every section and every field is present even though nothing was set.
    for (const char* key : {"synth", "vae", "seg", "ssim", "latent_search", "split", "run"}) {
        REQUIRE(j.contains(key));
    }
    REQUIRE(j.at("run").at("optimizer") == "rmsprop");
    REQUIRE(j.at("run").at("vae_lr").get<double>() == 0.0001);
    REQUIRE(j.at("run").at("seg_lr").get<double>() == 0.001);
    REQUIRE(j.at("run").at("epochs").get<int>() == 100);
    REQUIRE(j.at("run").at("batch_size").get<int>() == 32);
    REQUIRE(j.at("ssim").at("window_size").get<int>() == 11);
    REQUIRE(j.at("ssim").at("window_sigma").get<double>() == 1.5);
    REQUIRE(j.at("latent_search").at("max_iterations").get<int>() == 500);
    REQUIRE(j.at("latent_search").at("learning_rate").get<double>() == 0.05);
    REQUIRE(j.at("latent_search").at("init_policy") == "encoder-init");
}

TEST_CASE("unknown keys are rejected with their path") {
    Json j = Json{{"vae", Json{{"latent_dimension", 10}}}};
    REQUIRE_THROWS_WITH(cli_config_from_json(j), Catch::Matchers::ContainsSubstring("config.vae.latent_dimension"));
    Json j2 = Json{{"mystery", 1}};
    REQUIRE_THROWS_WITH(cli_config_from_json(j2), Catch::Matchers::ContainsSubstring("config.mystery"));
}

TEST_CASE("bad values are rejected naming the field") {
    REQUIRE_THROWS_WITH(cli_config_from_json(Json{{"ssim", Json{{"channel_policy", "rainbow"}}}}),
                        Catch::Matchers::ContainsSubstring("channel_policy"));
    REQUIRE_THROWS_WITH(cli_config_from_json(Json{{"latent_search", Json{{"init_policy", "psychic"}}}}),
                        Catch::Matchers::ContainsSubstring("init_policy"));
    REQUIRE_THROWS_WITH(cli_config_from_json(Json{{"run", Json{{"epochs", "many"}}}}),
                        Catch::Matchers::ContainsSubstring("run.epochs"));
    Json bad_matrix;
    bad_matrix["synth"]["source_style"]["color_matrix"] = {1, 2};
    REQUIRE_THROWS_WITH(cli_config_from_json(bad_matrix), Catch::Matchers::ContainsSubstring("color_matrix"));
}

TEST_CASE("presets select sizes") {
    const CliConfig c1 = cli_config_from_json(Json{{"vae", Json{{"preset", "desk-scale"}}}});
    REQUIRE(c1.vae.input_h == 64);
    REQUIRE(c1.vae.latent_dim == 64);

    const CliConfig c2 = cli_config_from_json(
        Json{{"vae", Json{{"preset", "paper-scale"}}}, {"seg", Json{{"backbone", "paper-scale"}}}});
    REQUIRE(c2.vae.input_h == 128);
    REQUIRE(c2.vae.latent_dim == 128);
    REQUIRE(c2.seg.input_h == 128);
    REQUIRE(c2.seg.effective_channels().size() == 5);
}

TEST_CASE("cross-section validation catches size mismatches") {
    Json j = Json{{"vae", Json{{"preset", "desk-scale"}}}, {"seg", Json{{"backbone", "paper-scale"}}}};
    REQUIRE_THROWS_WITH(cli_config_from_json(j), Catch::Matchers::ContainsSubstring("input sizes"));
}

TEST_CASE("invalid numeric settings are rejected by validation") {
    REQUIRE_THROWS_AS(cli_config_from_json(Json{{"run", Json{{"epochs", 0}}}}), std::invalid_argument);
    REQUIRE_THROWS_AS(cli_config_from_json(Json{{"run", Json{{"optimizer", "sgd"}}}}), std::invalid_argument);
    REQUIRE_THROWS_AS(cli_config_from_json(Json{{"ssim", Json{{"alpha", -1.0}}}}), std::invalid_argument);
    REQUIRE_THROWS_AS(cli_config_from_json(Json{{"latent_search", Json{{"max_iterations", 0}}}}),
                      std::invalid_argument);
}
