#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "fteasd/config.hpp"

namespace {

using namespace fteasd;

TEST(Config, DeskDefaultsDeriveExpectedGeometry) {
  ExperimentConfig c;
  c.validate();
  EXPECT_EQ(c.clip_samples(), 32768);
  EXPECT_EQ(c.freq_bins(), 129);
  EXPECT_EQ(c.time_frames(), 128);
  ModelConfig m = c.model_config();
  EXPECT_EQ(m.freq_bins, 129);
  EXPECT_EQ(m.time_frames, 128);
  EXPECT_EQ(m.spectrum_bins, 2048);
  EXPECT_EQ(m.gram_embed_dim, 128);
  EXPECT_TRUE(m.switches.use_ftc);
  EXPECT_TRUE(m.switches.use_excitation);
}

TEST(Config, FullPresetDerivesWideGeometry) {
  ExperimentConfig c = ExperimentConfig::preset("full");
  c.validate();
  EXPECT_EQ(c.clip_samples(), 288000);
  EXPECT_EQ(c.freq_bins(), 513);
  EXPECT_EQ(c.time_frames(), 561);
  EXPECT_EQ(c.ftc_block_channels[3], 128);
  EXPECT_EQ(c.excitation_stage_channels[3], 256);
  EXPECT_EQ(c.n_subclusters, 16);
  EXPECT_EQ(ExperimentConfig::preset("desk").serialize(), ExperimentConfig{}.serialize());
  EXPECT_THROW(ExperimentConfig::preset("tiny"), argument_error);
}

TEST(Config, SerializeParseRoundTrip) {
  ExperimentConfig c;
  c.clip_seconds = 0.731;
  c.overlap = 0.25;
  c.ftc_block_channels = {3, 5, 7, 9};
  c.learning_rate = 0.00073;
  c.seed = 987654321;
  std::string text = c.serialize();

  ExperimentConfig back;
  back.apply_text(text);
  EXPECT_EQ(back.serialize(), text);
  EXPECT_DOUBLE_EQ(back.clip_seconds, 0.731);
  EXPECT_DOUBLE_EQ(back.learning_rate, 0.00073);
  EXPECT_EQ(back.ftc_block_channels, (std::array<long long, 4>{3, 5, 7, 9}));
  EXPECT_EQ(back.seed, 987654321u);
}

TEST(Config, ParserSkipsCommentsAndRejectsBadLines) {
  ExperimentConfig c;
  c.apply_text("# comment\n\n  audio.window = 512  \r\nchunking.n_chunks=3\n");
  EXPECT_EQ(c.window, 512);
  EXPECT_EQ(c.n_chunks, 3);

  EXPECT_THROW(ExperimentConfig{}.apply_text("audio.window 512\n"), argument_error);
  EXPECT_THROW(ExperimentConfig{}.apply_text("audio.window = 512\naudio.window = 256\n"),
               argument_error);
  EXPECT_THROW(ExperimentConfig{}.apply_text("nonsense.key = 1\n"), argument_error);
  EXPECT_THROW(ExperimentConfig{}.apply_text("audio.window = twelve\n"), argument_error);
  EXPECT_THROW(ExperimentConfig{}.apply_text("audio.clip_seconds = 2.0x\n"), argument_error);
  EXPECT_THROW(ExperimentConfig{}.apply_text("model.ftc_block_channels = 1,2,3\n"),
               argument_error);
  EXPECT_THROW(ExperimentConfig{}.apply_text("model.ftc_block_channels = 1,2,3,4,5\n"),
               argument_error);
}

TEST(Config, ValidationCatchesBadGeometry) {
  ExperimentConfig c;
  c.spectrum_bins = c.clip_samples() / 2 + 2;
  EXPECT_THROW(c.validate(), argument_error);

  c = ExperimentConfig{};
  c.overlap = 1.0;
  EXPECT_THROW(c.validate(), argument_error);

  c = ExperimentConfig{};
  c.window = 1;
  EXPECT_THROW(c.validate(), argument_error);

  c = ExperimentConfig{};
  c.clip_seconds = 0.001;  // 16 samples, shorter than the window
  EXPECT_THROW(c.validate(), argument_error);

  c = ExperimentConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), argument_error);

  c = ExperimentConfig{};
  c.epochs = -1;
  EXPECT_THROW(c.validate(), argument_error);
}

TEST(Config, FromFileAppliesOverridesOntoDefaults) {
  std::string path = testing::TempDir() + "exp.cfg";
  {
    std::ofstream f(path);
    f << "# tiny run\n";
    f << "training.epochs = 3\n";
    f << "training.learning_rate = 0.005\n";
  }
  ExperimentConfig c = ExperimentConfig::from_file(path);
  EXPECT_EQ(c.epochs, 3);
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.005);
  EXPECT_EQ(c.window, 256);  // untouched default

  EXPECT_THROW(ExperimentConfig::from_file(testing::TempDir() + "nope.cfg"), io_error);
}

}  // namespace
