#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "scnt/costs.hpp"
#include "scnt/kernels.hpp"
#include "scnt/space.hpp"
#include "scnt/supernet.hpp"

namespace scnt {
namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(ChoiceSpec, StrParseRoundTrip) {
  const std::vector<ChoiceSpec> cases = {
      ChoiceSpec::skip(),       ChoiceSpec::els(),        ChoiceSpec::els(true),
      ChoiceSpec::ib(3, 3),     ChoiceSpec::ib(6, 7),     ChoiceSpec::ib(3, 5, true),
      ChoiceSpec::ib(6, 3, true)};
  for (const auto& c : cases) {
    EXPECT_EQ(ChoiceSpec::parse(c.str()), c) << c.str();
  }
  EXPECT_EQ(ChoiceSpec::parse("ib-e3k5").str(), "ib-e3k5");
  EXPECT_EQ(ChoiceSpec::parse("ib-e6k3-se").str(), "ib-e6k3-se");
}

TEST(ChoiceSpec, ParseRejectsGarbage) {
  EXPECT_THROW(ChoiceSpec::parse("conv"), std::invalid_argument);
  EXPECT_THROW(ChoiceSpec::parse("ib-e3"), std::invalid_argument);
  EXPECT_THROW(ChoiceSpec::parse("ib-ekk"), std::invalid_argument);
  EXPECT_THROW(ChoiceSpec::parse(""), std::invalid_argument);
}

TEST(SpaceSpec, T1HasExpectedShape) {
  const SpaceSpec t1 = t1_space();
  EXPECT_EQ(t1.name, "t1");
  EXPECT_EQ(t1.layer_count(), 4);
  EXPECT_TRUE(t1.rectangular());
  for (const auto& l : t1.layers) {
    ASSERT_EQ(l.choices.size(), 3u);
    EXPECT_EQ(l.choices[0].str(), "ib-e3k3");
    EXPECT_EQ(l.choices[1].str(), "ib-e3k5");
    EXPECT_EQ(l.choices[2].str(), "skip");
  }
}

TEST(SpaceSpec, ValidationNamesTheBrokenLayer) {
  SpaceSpec s = t1_space();
  s.layers[2].stride = 2;  // skip at stride 2 is illegal
  try {
    s.validate();
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("stride"), std::string::npos) << e.what();
  }

  s = t1_space();
  s.layers[1].in_channels = 16;
  try {
    s.validate();
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("channel chain"), std::string::npos) << e.what();
  }

  s = t1_space();
  s.layers[3].choices.resize(1);
  EXPECT_THROW(s.validate(), std::invalid_argument);

  s = t1_space();
  s.layers[0].choices[0].kernel = 4;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(SpaceSpec, SkipIllegalOnChannelChange) {
  SpaceSpec s = t1_space();
  s.layers[2].out_channels = 16;
  s.layers[3].in_channels = 16;
  s.layers[3].out_channels = 16;
  try {
    s.validate();
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("8 -> 16"), std::string::npos) << e.what();
  }
}

TEST(SpaceSpec, StabilizerSwapReplacesEverySkip) {
  const SpaceSpec els = with_stabilizers(t1_space());
  EXPECT_EQ(els.name, "t1-els");
  for (const auto& l : els.layers) {
    EXPECT_EQ(l.choices[2].kind, ChoiceKind::Els);
    EXPECT_FALSE(l.choices[2].relu);
  }
  const SpaceSpec rels = with_stabilizers(t1_space(), true);
  EXPECT_EQ(rels.name, "t1-els-relu");
  EXPECT_TRUE(rels.layers[0].choices[2].relu);
}

TEST(SpaceSpec, DeployViewUndoesTheStabilizerSwap) {
  const SpaceSpec t1 = t1_space();
  for (bool relu : {false, true}) {
    const SpaceSpec back = without_stabilizers(with_stabilizers(t1, relu));
    EXPECT_EQ(back.name, "t1");
    ASSERT_EQ(back.layer_count(), t1.layer_count());
    for (int l = 0; l < t1.layer_count(); ++l) {
      ASSERT_EQ(back.layers[l].choices.size(), t1.layers[l].choices.size());
      for (std::size_t c = 0; c < t1.layers[l].choices.size(); ++c) {
        EXPECT_EQ(back.layers[l].choices[c].str(), t1.layers[l].choices[c].str());
      }
    }
    const Architecture all_skip{{2, 2, 2, 2}};
    EXPECT_EQ(count_madds(back, all_skip), count_madds(t1, all_skip));
  }
  // a spec that never had stabilizers passes through untouched
  EXPECT_EQ(without_stabilizers(t1).name, "t1");
}

TEST(SpaceSpec, MobileSpaceIsRaggedWhereSkipIsIllegal) {
  const SpaceSpec s1 = s1_space();
  EXPECT_EQ(s1.layer_count(), 19);
  int with_skip = 0, without = 0;
  for (const auto& l : s1.layers) {
    if (l.choices.size() == 7u) {
      EXPECT_EQ(l.choices.back().kind, ChoiceKind::Skip);
      ++with_skip;
    } else {
      ASSERT_EQ(l.choices.size(), 6u);
      ++without;
    }
    // variant order: e3k3, e3k5, e3k7, e6k3, e6k5, e6k7
    EXPECT_EQ(l.choices[0].str(), "ib-e3k3");
    EXPECT_EQ(l.choices[1].str(), "ib-e3k5");
    EXPECT_EQ(l.choices[5].str(), "ib-e6k7");
  }
  EXPECT_EQ(with_skip, 13);
  EXPECT_EQ(without, 6);
  EXPECT_FALSE(s1.rectangular());

  const SpaceSpec s2 = s1_space(true);
  EXPECT_EQ(s2.name, "s2");
  EXPECT_EQ(s2.layers[0].choices.size(), 12u);  // stride-2 entry layer, no skip
  EXPECT_EQ(s2.layers[1].choices.size(), 13u);
  EXPECT_EQ(s2.layers[1].choices[6].str(), "ib-e3k3-se");
}

TEST(Architecture, StrParseRoundTrip) {
  Architecture a;
  a.genes = {0, 2, 1, 2};
  EXPECT_EQ(a.str(), "0,2,1,2");
  EXPECT_EQ(Architecture::parse("0,2,1,2"), a);
  EXPECT_THROW(Architecture::parse("0,x,1"), std::invalid_argument);
}

TEST(Architecture, ValidateChecksLengthAndRange) {
  const SpaceSpec t1 = t1_space();
  Architecture a;
  a.genes = {0, 0, 0};
  EXPECT_THROW(validate_arch(t1, a), std::invalid_argument);
  a.genes = {0, 0, 0, 3};
  try {
    validate_arch(t1, a);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("layer 3"), std::string::npos) << e.what();
  }
}

TEST(Space, EnumerationIsExhaustiveAndOrdered) {
  const SpaceSpec t1 = t1_space();
  const auto all = enumerate_space(t1, 256);
  ASSERT_EQ(all.size(), 81u);
  EXPECT_EQ(all.front().str(), "0,0,0,0");
  EXPECT_EQ(all.back().str(), "2,2,2,2");
  std::set<std::vector<int>> uniq;
  for (std::size_t i = 0; i < all.size(); ++i) {
    uniq.insert(all[i].genes);
    if (i) EXPECT_LT(all[i - 1].genes, all[i].genes);
    validate_arch(t1, all[i]);
  }
  EXPECT_EQ(uniq.size(), 81u);
  EXPECT_THROW(enumerate_space(t1, 80), std::invalid_argument);
  EXPECT_THROW(enumerate_space(s1_space(), 1u << 20), std::invalid_argument);
}

TEST(Space, AllSkipPicksTheLastIdentityGene) {
  EXPECT_EQ(all_skip_arch(t1_space()).str(), "2,2,2,2");
  EXPECT_EQ(all_skip_arch(with_stabilizers(t1_space())).str(), "2,2,2,2");
  EXPECT_THROW(all_skip_arch(s1_space()), std::invalid_argument);
}

TEST(Space, UniformSamplingHitsEveryChoiceAtExpectedRate) {
  const SpaceSpec t1 = t1_space();
  Rng rng(123);
  const int n = 100000;
  int counts[4][3] = {};
  for (int i = 0; i < n; ++i) {
    const Architecture a = sample_uniform(t1, rng);
    for (int l = 0; l < 4; ++l) ++counts[l][a.genes[l]];
  }
  // binomial 3 sigma around n/3
  const double sigma = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
  for (int l = 0; l < 4; ++l) {
    for (int c = 0; c < 3; ++c) {
      EXPECT_NEAR(counts[l][c], n / 3.0, 3 * sigma) << "layer " << l << " choice " << c;
    }
  }
}

TEST(Space, FairGroupsArePerLayerPermutations) {
  const SpaceSpec t1 = t1_space();
  Rng rng(7);
  std::set<std::string> seen;
  for (int g = 0; g < 200; ++g) {
    const auto group = sample_fair_group(t1, rng);
    ASSERT_EQ(group.size(), 3u);
    std::string key;
    for (int l = 0; l < 4; ++l) {
      std::set<int> column;
      for (const auto& a : group) column.insert(a.genes[l]);
      EXPECT_EQ(column.size(), 3u) << "layer " << l << " is not a permutation";
    }
    for (const auto& a : group) key += a.str() + ";";
    seen.insert(key);
  }
  EXPECT_GT(seen.size(), 100u);  // groups are not stuck on one permutation
}

TEST(Space, FairGroupsRejectRaggedSpaces) {
  try {
    Rng rng(1);
    sample_fair_group(s1_space(), rng);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("fair"), std::string::npos) << e.what();
  }
}

TEST(Space, JsonRoundTripPreservesEverything) {
  for (const SpaceSpec& spec : {t1_space(), with_stabilizers(t1_space(), true), s1_space(true)}) {
    const nlohmann::json j = space_to_json(spec);
    const SpaceSpec back = space_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(space_to_json(back).dump(), j.dump()) << spec.name;
    EXPECT_EQ(back.name, spec.name);
  }
}

TEST(Space, JsonErrorsMentionTheConfig) {
  nlohmann::json j = space_to_json(t1_space());
  j.erase("classes");
  try {
    space_from_json(j);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("space config"), std::string::npos) << e.what();
  }
  j = space_to_json(t1_space());
  j["layers"][0]["choices"][0] = "warp";
  EXPECT_THROW(space_from_json(j), std::invalid_argument);
}

// ---- cost model ----

TEST(Costs, PointwiseConvHandExample) {
  // 8x8 feature map, 8 -> 16 channels, 1x1 kernel: 8*8*16*8
  LayerSpec l;
  l.in_channels = 8;
  l.out_channels = 16;
  l.stride = 1;
  EXPECT_EQ(choice_madds(l, ChoiceSpec::els(), 8), 8192);
  EXPECT_EQ(choice_params(l, ChoiceSpec::els()), 128);
}

TEST(Costs, ToySpaceBlockTable) {
  const SpaceSpec t1 = t1_space();
  const LayerSpec& l = t1.layers[0];
  EXPECT_EQ(spatial_at_layer(t1, 0), 8);
  EXPECT_EQ(spatial_at_layer(t1, 4), 8);
  EXPECT_EQ(choice_madds(l, l.choices[0], 8), 38400);  // e3k3
  EXPECT_EQ(choice_madds(l, l.choices[1], 8), 62976);  // e3k5
  EXPECT_EQ(choice_madds(l, l.choices[2], 8), 0);      // skip
  EXPECT_EQ(choice_params(l, l.choices[0]), 712);
  EXPECT_EQ(choice_params(l, l.choices[1]), 1096);
  EXPECT_EQ(fixed_madds(t1), 30336);  // stem 13824 + tail conv 16384 + fc 128
  EXPECT_EQ(fixed_params(t1), 616);
}

TEST(Costs, ArchitectureTotalsAndExtremes) {
  const SpaceSpec t1 = t1_space();
  EXPECT_EQ(count_madds(t1, all_skip_arch(t1)), 30336);
  EXPECT_EQ(count_madds(t1, Architecture::parse("0,0,0,0")), 30336 + 4 * 38400);
  EXPECT_EQ(count_madds(t1, Architecture::parse("1,1,1,1")), 282240);
  EXPECT_EQ(count_params(t1, all_skip_arch(t1)), 616);
  EXPECT_EQ(count_params(t1, Architecture::parse("0,2,2,2")), 616 + 712);
  EXPECT_EQ(count_params(t1, Architecture::parse("1,1,1,1")), 5000);
  EXPECT_EQ(max_madds_arch(t1).str(), "1,1,1,1");

  const SpaceSpec els = with_stabilizers(t1);
  EXPECT_EQ(count_params(els, all_skip_arch(els)), 616 + 4 * 64);
  EXPECT_EQ(count_madds(els, all_skip_arch(els)), 30336 + 4 * 64 * 64);
}

TEST(Costs, UpgradingAnyLayerRaisesMadds) {
  const SpaceSpec t1 = t1_space();
  for (const auto& arch : enumerate_space(t1, 256)) {
    const std::int64_t base = count_madds(t1, arch);
    for (int l = 0; l < 4; ++l) {
      if (arch.genes[l] == 2) continue;  // skip -> anything handled by base cases
      if (arch.genes[l] == 0) {
        Architecture up = arch;
        up.genes[l] = 1;
        EXPECT_GT(count_madds(t1, up), base);
      }
      Architecture down = arch;
      down.genes[l] = 2;
      EXPECT_LT(count_madds(t1, down), base);
    }
  }
}

TEST(Costs, SqueezeExciteTermsAreCounted) {
  LayerSpec l;
  l.in_channels = 8;
  l.out_channels = 8;
  l.stride = 1;
  const ChoiceSpec plain = ChoiceSpec::ib(3, 3);
  const ChoiceSpec se = ChoiceSpec::ib(3, 3, true);
  // mid 24, se mid 6: two 1x1 convs of 24*6 each
  EXPECT_EQ(choice_madds(l, se, 8) - choice_madds(l, plain, 8), 2 * 24 * 6);
  EXPECT_EQ(choice_params(l, se) - choice_params(l, plain), 2 * 24 * 6);
}

// ---- supernet ----

TEST(Supernet, BankInventoryMatchesSpace) {
  Supernet net(t1_space(), 11);
  const auto named = net.named_tensors();
  // stem conv + stem bn(4) + 4 layers * 2 IB banks * 15 tensors + tail conv + fc
  EXPECT_EQ(named.size(), 5u + 4u * 2u * 15u + 2u);
  std::set<std::string> names;
  for (const auto& [name, t] : named) names.insert(name);
  EXPECT_EQ(names.size(), named.size()) << "duplicate tensor names";
  EXPECT_TRUE(names.count("stem.conv"));
  EXPECT_TRUE(names.count("layer0.choice0.dw"));
  EXPECT_TRUE(names.count("layer3.choice1.bn3.running_var"));
  EXPECT_TRUE(names.count("head.fc"));
  EXPECT_FALSE(names.count("layer0.choice2.els"));  // plain skip owns no tensors

  Supernet els_net(with_stabilizers(t1_space()), 11);
  const auto els_named = els_net.named_tensors();
  EXPECT_EQ(els_named.size(), named.size() + 4u);
}

TEST(Supernet, SameSeedGivesBitIdenticalCheckpoints) {
  const std::string a = "/tmp/scnt_sup_a.scnt";
  const std::string b = "/tmp/scnt_sup_b.scnt";
  Supernet n1(t1_space(), 42);
  Supernet n2(t1_space(), 42);
  Supernet n3(t1_space(), 43);
  n1.save(a);
  n2.save(b);
  EXPECT_EQ(slurp(a), slurp(b));
  n3.save(b);
  EXPECT_NE(slurp(a), slurp(b));
}

TEST(Supernet, SaveLoadRoundTrip) {
  const std::string path = "/tmp/scnt_sup_rt.scnt";
  Supernet net(t1_space(), 5);
  net.save(path);
  const float original = net.bank(2, 0).ib.dw->value.at(0, 0, 1, 1);
  net.bank(2, 0).ib.dw->value.at(0, 0, 1, 1) = -99.0f;
  net.load(path);
  EXPECT_EQ(net.bank(2, 0).ib.dw->value.at(0, 0, 1, 1), original);
}

TEST(Supernet, LoadRejectsMismatchedSpace) {
  const std::string path = "/tmp/scnt_sup_mismatch.scnt";
  Supernet net(t1_space(), 5);
  net.save(path);
  Supernet other(with_stabilizers(t1_space()), 5);
  try {
    other.load(path);
    FAIL() << "expected runtime_error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("tensors"), std::string::npos) << e.what();
  }
}

TEST(Supernet, AllSkipPathEqualsStemPlusTail) {
  const SpaceSpec t1 = t1_space();
  Supernet net(t1, 9);
  Tensor batch(2, 3, 16, 16);
  Rng rng(1);
  batch.fill_uniform(rng, -1.0f, 1.0f);

  Network<float> path = net.path_network(all_skip_arch(t1));
  const Tensor via_path = path.forward(batch, Mode::Eval);
  ASSERT_TRUE(via_path.shape() == Shape4(2, 4, 1, 1));

  // same computation spelled out against the raw kernels
  Tensor x = conv2d_forward(batch, net.stem_conv()->value, 2, 1, 1);
  x = batchnorm_forward_eval<float>(x, net.stem_bn().gamma->value, net.stem_bn().beta->value,
                             *net.stem_bn().running_mean, *net.stem_bn().running_var, kBnEps,
                             nullptr);
  x = activation_forward(x, ActKind::Relu6);
  x = conv2d_forward(x, net.tail_conv()->value, 1, 0, 1);
  x = global_avg_pool_forward(x);
  x = linear_forward(x, net.fc()->value);

  ASSERT_TRUE(x.shape() == via_path.shape());
  EXPECT_EQ(std::memcmp(x.raw().data(), via_path.raw().data(), x.shape().numel() * sizeof(float)), 0);
}

TEST(Supernet, PathParamElementsMatchCostModel) {
  const SpaceSpec els = with_stabilizers(t1_space());
  Supernet net(els, 3);
  for (const auto& arch : enumerate_space(els, 256)) {
    Network<float> path = net.path_network(arch);
    std::int64_t total = 0;
    for (const auto& p : path.params()) total += static_cast<std::int64_t>(p->value.shape().numel());
    EXPECT_EQ(total, count_params(els, arch)) << arch.str();
  }
}

TEST(Supernet, TrainingOnePathLeavesOtherBanksUntouched) {
  const SpaceSpec t1 = t1_space();
  Supernet net(t1, 17);
  std::map<std::string, std::vector<float>> before;
  for (const auto& [name, t] : net.named_tensors()) {
    before[name] = t->raw();
  }

  Tensor batch(4, 3, 16, 16);
  Rng rng(2);
  batch.fill_uniform(rng, 0.0f, 1.0f);
  std::vector<int> labels = {0, 1, 2, 3};

  const Architecture chosen = Architecture::parse("0,0,0,0");
  Network<float> path = net.path_network(chosen);
  const Tensor logits = path.forward(batch, Mode::Train);
  const SoftmaxLoss loss = softmax_cross_entropy(logits, labels);
  path.backward(loss.grad_logits);
  Sgd<float> opt(0.05f, 0.9f, 0.0f);
  opt.step(path.params());

  int changed = 0, untouched = 0;
  for (const auto& [name, t] : net.named_tensors()) {
    const auto& prev = before[name];
    const bool same =
        std::memcmp(prev.data(), t->raw().data(), prev.size() * sizeof(float)) == 0;
    const bool on_path = name.rfind("stem", 0) == 0 || name.rfind("tail", 0) == 0 ||
                         name.rfind("head", 0) == 0 || name.find("choice0") != std::string::npos;
    if (on_path) {
      EXPECT_FALSE(same) << name << " should have moved";
      ++changed;
    } else {
      EXPECT_TRUE(same) << name << " belongs to an unchosen bank";
      ++untouched;
    }
  }
  EXPECT_EQ(changed, 5 + 4 * 15 + 2);
  EXPECT_EQ(untouched, 4 * 15);
}

TEST(Supernet, PrefixActivationsIgnoreLaterGenes) {
  const SpaceSpec t1 = t1_space();
  Supernet net(t1, 23);
  Tensor batch(2, 3, 16, 16);
  Rng rng(4);
  batch.fill_uniform(rng, -1.0f, 1.0f);

  const Architecture a = Architecture::parse("0,1,0,0");
  const Architecture b = Architecture::parse("0,1,0,2");  // differs at layer 3 only
  Network<float> pa = net.prefix_network(3, a);
  Network<float> pb = net.prefix_network(3, b);
  const Tensor xa = pa.forward(batch, Mode::Eval);
  const Tensor xb = pb.forward(batch, Mode::Eval);
  ASSERT_TRUE(xa.shape() == Shape4(2, 8, 8, 8));
  EXPECT_EQ(std::memcmp(xa.raw().data(), xb.raw().data(), xa.shape().numel() * sizeof(float)), 0);

  // full-path logits do differ
  const Tensor la = net.forward_path(a, batch, Mode::Eval);
  const Tensor lb = net.forward_path(b, batch, Mode::Eval);
  EXPECT_NE(std::memcmp(la.raw().data(), lb.raw().data(), la.shape().numel() * sizeof(float)), 0);
}

TEST(Supernet, UpdateCountersTrackSelections) {
  Supernet net(t1_space(), 1);
  net.count_update(Architecture::parse("0,1,2,0"));
  net.count_update(Architecture::parse("0,1,2,1"));
  const auto& c = net.update_counts();
  EXPECT_EQ(c[0][0], 2);
  EXPECT_EQ(c[1][1], 2);
  EXPECT_EQ(c[2][2], 2);
  EXPECT_EQ(c[3][0], 1);
  EXPECT_EQ(c[3][1], 1);
  EXPECT_EQ(c[3][2], 0);
}

TEST(Supernet, StabilizerIdentityInitIsNearIdentity) {
  const SpaceSpec els = with_stabilizers(t1_space());
  Supernet net(els, 31, ElsInit::IdentityNoise);
  const auto& w = net.bank(0, 2).els->value;
  ASSERT_TRUE(w.shape() == Shape4(8, 8, 1, 1));
  for (int o = 0; o < 8; ++o) {
    for (int i = 0; i < 8; ++i) {
      const float expect = o == i ? 1.0f : 0.0f;
      EXPECT_NEAR(w.at(o, i, 0, 0), expect, 0.05f);
    }
  }
  // identity + noise: an eval-mode stabilizer path stays close to the skip path
  Tensor batch(2, 3, 16, 16);
  Rng rng(6);
  batch.fill_uniform(rng, 0.0f, 1.0f);
  Supernet plain(t1_space(), 31);
  const Architecture skip_arch = all_skip_arch(t1_space());
  const Tensor skip_logits = plain.forward_path(skip_arch, batch, Mode::Eval);
  // different nets share no weights, so compare structurally: stabilizer output
  // shape matches and values are finite
  const Tensor els_logits = net.forward_path(skip_arch, batch, Mode::Eval);
  ASSERT_TRUE(els_logits.shape() == skip_logits.shape());
  for (std::size_t i = 0; i < els_logits.shape().numel(); ++i) {
    EXPECT_TRUE(std::isfinite(els_logits.raw()[i]));
  }
}

TEST(Supernet, RandomStabilizerInitDiffersFromIdentity) {
  const SpaceSpec els = with_stabilizers(t1_space());
  Supernet net(els, 31, ElsInit::Random);
  const auto& w = net.bank(0, 2).els->value;
  float diag = 0.0f;
  for (int i = 0; i < 8; ++i) diag += w.at(i, i, 0, 0);
  EXPECT_LT(std::abs(diag - 8.0f), 7.9f);  // nowhere near the identity trace
}

// ---- standalone ----

TEST(Standalone, DropsIdentityGenes) {
  const SpaceSpec t1 = t1_space();
  const auto sa = build_standalone<float>(t1, Architecture::parse("0,2,1,2"), 77);
  ASSERT_EQ(sa.blocks.size(), 2u);
  EXPECT_EQ(sa.blocks[0].choice.str(), "ib-e3k3");
  EXPECT_EQ(sa.blocks[1].choice.str(), "ib-e3k5");
  EXPECT_EQ(sa.blocks[0].in_channels, 8);
  EXPECT_EQ(sa.blocks[0].stride, 1);

  Tensor batch(2, 3, 16, 16);
  Rng rng(5);
  batch.fill_uniform(rng, 0.0f, 1.0f);
  Network<float> net = sa.network();
  const Tensor logits = net.forward(batch, Mode::Eval);
  ASSERT_TRUE(logits.shape() == Shape4(2, 4, 1, 1));
}

TEST(Standalone, AllIdentityArchIsJustStemAndTail) {
  const SpaceSpec t1 = t1_space();
  auto sa = build_standalone<float>(t1, all_skip_arch(t1), 77);
  EXPECT_TRUE(sa.blocks.empty());
  EXPECT_EQ(sa.named_tensors().size(), 5u + 2u);
  Tensor batch(2, 3, 16, 16);
  Rng rng(5);
  batch.fill_uniform(rng, 0.0f, 1.0f);
  Network<float> net = sa.network();
  EXPECT_TRUE(net.forward(batch, Mode::Eval).shape() == Shape4(2, 4, 1, 1));
}

TEST(Standalone, ParamElementsMatchCostModelWithoutStabilizers) {
  const SpaceSpec t1 = t1_space();
  const SpaceSpec els = with_stabilizers(t1);
  for (const std::string& genes : {"0,0,0,0", "1,2,0,2", "2,2,2,2", "0,1,2,1"}) {
    const Architecture arch = Architecture::parse(genes);
    auto sa = build_standalone<float>(t1, arch, 13);
    std::int64_t total = 0;
    Network<float> net = sa.network();
    for (const auto& p : net.params()) total += static_cast<std::int64_t>(p->value.shape().numel());
    EXPECT_EQ(total, count_params(t1, arch)) << genes;

    // the stabilizer space counts 64 extra params per els gene; the stripped
    // standalone is identical either way
    auto sa2 = build_standalone<float>(els, arch, 13);
    std::int64_t total2 = 0;
    Network<float> net2 = sa2.network();
    for (const auto& p : net2.params()) {
      total2 += static_cast<std::int64_t>(p->value.shape().numel());
    }
    int els_genes = 0;
    for (int g : arch.genes) els_genes += g == 2 ? 1 : 0;
    EXPECT_EQ(total2, count_params(els, arch) - 64 * els_genes) << genes;
  }
}

TEST(Standalone, SameSeedSameBytes) {
  const SpaceSpec t1 = t1_space();
  const std::string a = "/tmp/scnt_sa_a.scnt";
  const std::string b = "/tmp/scnt_sa_b.scnt";
  auto s1 = build_standalone<float>(t1, Architecture::parse("0,1,0,1"), 21);
  auto s2 = build_standalone<float>(t1, Architecture::parse("0,1,0,1"), 21);
  s1.save(a);
  s2.save(b);
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST(Standalone, TrainStepReducesLossOnTinyBatch) {
  const SpaceSpec t1 = t1_space();
  auto sa = build_standalone<float>(t1, Architecture::parse("0,0,2,2"), 3);
  Tensor batch(8, 3, 16, 16);
  Rng rng(9);
  batch.fill_uniform(rng, 0.0f, 1.0f);
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) labels.push_back(i % 4);

  Sgd<float> opt(0.1f, 0.9f, 0.0f);
  double first = 0, last = 0;
  for (int step = 0; step < 30; ++step) {
    Network<float> net = sa.network();
    const Tensor logits = net.forward(batch, Mode::Train);
    const SoftmaxLoss loss = softmax_cross_entropy(logits, labels);
    if (step == 0) first = loss.loss;
    last = loss.loss;
    net.backward(loss.grad_logits);
    opt.step(net.params());
  }
  EXPECT_LT(last, first * 0.5) << "memorizing 8 samples should collapse the loss";
}

}  // namespace
}  // namespace scnt
