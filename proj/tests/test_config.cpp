// INI parsing, strict unknown-key rejection, the mini-languages for conv
// paths and spectral bands, and the canonical echo round trip.

#include <doctest.h>

#include <stdexcept>
#include <string>

#include "csf/config.hpp"
#include "testutil.hpp"

using csf::ConfigFile;
using csf::Index;

TEST_CASE("basic parsing, comments, and typed getters") {
  const std::string text =
      "# comment\n"
      "[alpha]\n"
      "name = hello world \n"
      "count = 42\n"
      "ratio = 0.25\n"
      "flag = true\n"
      "; another comment\n"
      "[beta]\n"
      "seeds = 3,5,8\n";
  ConfigFile cf = ConfigFile::parse_string(text, "test.ini");
  CHECK(cf.get_string("alpha", "name", "") == "hello world");
  CHECK(cf.get_int("alpha", "count", 0) == 42);
  CHECK(cf.get_double("alpha", "ratio", 0.0) == 0.25);
  CHECK(cf.get_bool("alpha", "flag", false));
  CHECK(cf.get_u64_list("beta", "seeds", {}) == std::vector<std::uint64_t>{3, 5, 8});
  CHECK(cf.get_int("alpha", "missing", 7) == 7);  // fallback
  CHECK(cf.has("alpha", "count"));
  CHECK_FALSE(cf.has("alpha", "nope"));
  cf.ensure_all_consumed();  // everything was read
}

TEST_CASE("unconsumed keys are rejected with the key and line") {
  ConfigFile cf = ConfigFile::parse_string("[a]\nx = 1\ntypo_key = 2\n", "my.ini");
  CHECK(cf.get_int("a", "x", 0) == 1);
  const std::string msg = testutil::thrown_message([&] { cf.ensure_all_consumed(); });
  CHECK(msg.find("my.ini") != std::string::npos);
  CHECK(msg.find("a.typo_key") != std::string::npos);
  CHECK(msg.find(":3:") != std::string::npos);  // the offending line
}

TEST_CASE("malformed input and duplicate keys") {
  CHECK_THROWS_AS(ConfigFile::parse_string("[a]\nno_equals_sign\n"), std::invalid_argument);
  CHECK_THROWS_AS(ConfigFile::parse_string("x = 1\n"), std::invalid_argument);  // before a section
  const std::string msg = testutil::thrown_message(
      [] { ConfigFile::parse_string("[a]\nx = 1\nx = 2\n", "dup.ini"); });
  CHECK(msg.find("duplicate") != std::string::npos);
  CHECK(msg.find("x") != std::string::npos);

  ConfigFile bad_int = ConfigFile::parse_string("[a]\nx = banana\n");
  CHECK_THROWS_AS(bad_int.get_int("a", "x", 0), std::invalid_argument);
  ConfigFile bad_bool = ConfigFile::parse_string("[a]\nx = maybe\n");
  CHECK_THROWS_AS(bad_bool.get_bool("a", "x", false), std::invalid_argument);
}

TEST_CASE("conv path mini-language round trips") {
  const std::string text = "conv:k=7,s=2,p=3,d=1,out=32 pool:w=2,s=2 conv:k=7,s=2,p=3";
  const csf::PathSpec path = csf::parse_path_spec(text);
  REQUIRE(path.stages.size() == 2);
  CHECK(path.stages[0].conv.kernel == 7);
  CHECK(path.stages[0].conv.stride == 2);
  CHECK(path.stages[0].conv.padding == 3);
  CHECK(path.stages[0].conv.dilation == 1);
  CHECK(path.stages[0].conv.out_channels == 32);
  REQUIRE(path.stages[0].pool.has_value());
  CHECK(path.stages[0].pool->window == 2);
  CHECK(path.stages[0].pool->stride == 2);
  CHECK_FALSE(path.stages[1].pool.has_value());
  CHECK(path.stages[1].conv.out_channels == 0);  // defaults to the embedding dim

  const std::string echoed = csf::format_path_spec(path);
  const csf::PathSpec again = csf::parse_path_spec(echoed);
  CHECK(csf::format_path_spec(again) == echoed);

  CHECK_THROWS_AS(csf::parse_path_spec("pool:w=2,s=2"), std::invalid_argument);  // pool needs a conv
  CHECK_THROWS_AS(csf::parse_path_spec("conv:k=3,zz=1"), std::invalid_argument);  // unknown field
  CHECK_THROWS_AS(csf::parse_path_spec(""), std::invalid_argument);
}

TEST_CASE("band mini-language round trips") {
  const auto bands = csf::parse_bands("2:1:50;12.5:2:30");
  REQUIRE(bands.size() == 2);
  CHECK(bands[0].center_hz == 2.0);
  CHECK(bands[0].bandwidth_hz == 1.0);
  CHECK(bands[0].amplitude_uv == 50.0);
  CHECK(bands[1].center_hz == 12.5);
  const std::string echoed = csf::format_bands(bands);
  CHECK(csf::format_bands(csf::parse_bands(echoed)) == echoed);
  CHECK_THROWS_AS(csf::parse_bands("2:1"), std::invalid_argument);
}

TEST_CASE("enum names round trip and reject unknowns") {
  for (auto g : {csf::GateActivation::Sigmoid, csf::GateActivation::Tanh,
                 csf::GateActivation::Softmax})
    CHECK(csf::parse_gate_activation(csf::format_gate_activation(g)) == g);
  for (auto m : {csf::MaskMode::SubtractDiag, csf::MaskMode::NegInfDiag})
    CHECK(csf::parse_mask_mode(csf::format_mask_mode(m)) == m);
  for (auto f : {csf::GeluForm::Exact, csf::GeluForm::Tanh})
    CHECK(csf::parse_gelu_form(csf::format_gelu_form(f)) == f);
  CHECK_THROWS_AS(csf::parse_gate_activation("relu"), std::invalid_argument);
  CHECK_THROWS_AS(csf::parse_mask_mode("none"), std::invalid_argument);
  CHECK_THROWS_AS(csf::parse_gelu_form("fast"), std::invalid_argument);
}

TEST_CASE("the canonical run-config echo is a fixpoint of parsing") {
  const csf::RunConfig defaults = csf::RunConfig::defaults();
  const std::string echo1 = csf::format_run_config(defaults);
  const csf::RunConfig parsed = csf::run_config_from_string(echo1);
  const std::string echo2 = csf::format_run_config(parsed);
  CHECK(echo1 == echo2);  // byte-identical

  // A customized config survives the same round trip.
  const std::string custom =
      "[data]\n"
      "seed = 9\n"
      "channels = 4\n"
      "length = 128\n"
      "classes = 2\n"
      "subjects_per_class = 5\n"
      "segments_per_subject = 6\n"
      "class0_bands = 3:1:40\n"
      "class1_bands = 11:2:35;21:1:10\n"
      "[noise]\n"
      "corrupted_channels = 2\n"
      "std = 250\n"
      "[split]\n"
      "train = 0.5\n"
      "val = 0.25\n"
      "test = 0.25\n"
      "[model]\n"
      "embed_dim = 8\n"
      "[attention]\n"
      "heads = 2\n"
      "ffn_dim = 16\n"
      "mask = neg-inf-diag\n"
      "[loss]\n"
      "lambda = 0.7\n"
      "tau = 0.3\n"
      "[train]\n"
      "seeds = 41,42\n"
      "epochs = 3\n"
      "batch_size = 8\n"
      "learning_rate = 0.001\n";
  const csf::RunConfig rc = csf::run_config_from_string(custom);
  CHECK(rc.data_seed == 9);
  CHECK(rc.data.channels == 4);
  CHECK(rc.data.classes == 2);
  CHECK(rc.data.class_bands[1].size() == 2);
  CHECK(rc.noise.corrupted_channel_count == 2);
  CHECK(rc.split.train == 0.5);
  CHECK(rc.model.encoder.embed_dim == 8);
  CHECK(rc.model.encoder.channels == 4);  // follows [data] channels
  CHECK(rc.model.loss.classes == 2);      // follows [data] classes
  CHECK(rc.model.attention.mask_mode == csf::MaskMode::NegInfDiag);
  CHECK(rc.model.seeds == std::vector<std::uint64_t>{41, 42});
  const std::string echo3 = csf::format_run_config(rc);
  CHECK(csf::format_run_config(csf::run_config_from_string(echo3)) == echo3);
}

TEST_CASE("unknown keys in a run config are fatal") {
  const std::string msg = testutil::thrown_message(
      [] { csf::run_config_from_string("[data]\nchannles = 6\n"); });
  CHECK(msg.find("unknown key") != std::string::npos);
  CHECK(msg.find("data.channles") != std::string::npos);

  // Band keys beyond the class count are unknown too.
  const std::string msg2 = testutil::thrown_message([] {
    csf::run_config_from_string("[data]\nclasses = 2\nclass2_bands = 3:1:10\n");
  });
  CHECK(msg2.find("class2_bands") != std::string::npos);
}

TEST_CASE("model-config echo reconstructs the model dimensions") {
  csf::ModelConfig m = csf::ModelConfig::defaults();
  m.encoder.channels = 4;
  m.encoder.embed_dim = 16;
  m.attention.heads = 2;
  m.attention.ffn_dim = 32;
  m.loss.classes = 5;
  m.loss.lambda = 0.25;
  m.seeds = {7};
  m.epochs = 12;
  m.batch_size = 9;
  m.learning_rate = 5e-4;
  m.weight_decay = 1e-3;

  const std::string echo = csf::format_model_config(m);
  CHECK(echo.find("channels = 4") != std::string::npos);
  CHECK(echo.find("classes = 5") != std::string::npos);

  const csf::ModelConfig back = csf::parse_model_config(echo);
  CHECK(back.encoder.channels == 4);
  CHECK(back.encoder.embed_dim == 16);
  CHECK(back.attention.heads == 2);
  CHECK(back.attention.ffn_dim == 32);
  CHECK(back.loss.classes == 5);
  CHECK(back.loss.lambda == 0.25);
  CHECK(back.seeds == std::vector<std::uint64_t>{7});
  CHECK(back.epochs == 12);
  CHECK(back.batch_size == 9);
  CHECK(back.learning_rate == 5e-4);
  CHECK(back.weight_decay == 1e-3);
  CHECK(csf::format_model_config(back) == echo);

  // The run-config echo omits the dimension keys (they follow [data]).
  csf::RunConfig rc = csf::RunConfig::defaults();
  const std::string run_echo = csf::format_run_config(rc);
  CHECK(run_echo.find("[encoder]\nchannels") == std::string::npos);
}
