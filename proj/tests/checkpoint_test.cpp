#include "mpg/checkpoint.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "testutil.hpp"

namespace mpg {
namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TEST(Checkpoint, RoundTripIsBitwise) {
  std::mt19937_64 rng(17);
  Mlp pi(6, 16, 2, OutputSquash::kLinear);
  pi.init(rng);
  Mlp q(8, 16, 1, OutputSquash::kLinear);
  q.init(rng);

  Checkpoint ck;
  ck.iteration = 4242;
  ck.add("policy", pi.layers());
  ck.add("q1", q.layers());

  std::string path = temp_path("mpg_ck_test.bin");
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.iteration, 4242);
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[0].first, "policy");
  for (size_t i = 0; i < pi.layers().size(); ++i) {
    EXPECT_EQ(0.0, (back.entries[0].second[i] - pi.layers()[i])
                       .cwiseAbs()
                       .maxCoeff());
  }

  Mlp restored(6, 16, 2, OutputSquash::kLinear);
  restore_layers(back, "policy", restored.layers());
  for (size_t i = 0; i < pi.layers().size(); ++i)
    EXPECT_EQ(0.0,
              (restored.layers()[i] - pi.layers()[i]).cwiseAbs().maxCoeff());
  std::remove(path.c_str());
}

TEST(Checkpoint, HeaderIsLengthPrefixedJson) {
  Checkpoint ck;
  ck.iteration = 7;
  ck.add("n", {Mat::Ones(2, 3)});
  std::string path = temp_path("mpg_ck_header.bin");
  save_checkpoint(path, ck);
  std::ifstream f(path, std::ios::binary);
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string hs(len, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(len));
  auto j = nlohmann::json::parse(hs);
  EXPECT_EQ(j["iteration"], 7);
  EXPECT_EQ(j["networks"][0]["layers"][0][0], 2);
  EXPECT_EQ(j["networks"][0]["layers"][0][1], 3);
  std::remove(path.c_str());
}

TEST(Checkpoint, MissingNetworkThrows) {
  Checkpoint ck;
  ck.add("a", {Mat::Ones(1, 1)});
  std::vector<Mat> layers = {Mat::Zero(1, 1)};
  EXPECT_THROW(restore_layers(ck, "b", layers), CheckpointError);
}

}  // namespace
}  // namespace mpg
