#pragma once

// Search-space description: per-layer choice lists over inverted bottlenecks,
// skip connections, and learnable stabilizers, plus architecture encoding and
// the two sampling rules (uniform, and fair groups without replacement).

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "scnt/rng.hpp"

namespace scnt {

enum class ChoiceKind { InvertedBottleneck, Skip, Els };

struct ChoiceSpec {
  ChoiceKind kind = ChoiceKind::Skip;
  int expansion = 0;  // inverted bottleneck only
  int kernel = 0;     // inverted bottleneck only
  bool se = false;    // inverted bottleneck only
  bool relu = false;  // stabilizer probe variant; breaks equivalence on purpose

  bool operator==(const ChoiceSpec&) const = default;

  static ChoiceSpec ib(int expansion, int kernel, bool se = false) {
    ChoiceSpec c;
    c.kind = ChoiceKind::InvertedBottleneck;
    c.expansion = expansion;
    c.kernel = kernel;
    c.se = se;
    return c;
  }
  static ChoiceSpec skip() { return ChoiceSpec{}; }
  static ChoiceSpec els(bool relu = false) {
    ChoiceSpec c;
    c.kind = ChoiceKind::Els;
    c.relu = relu;
    return c;
  }

  std::string str() const {
    switch (kind) {
      case ChoiceKind::Skip:
        return "skip";
      case ChoiceKind::Els:
        return relu ? "els-relu" : "els";
      case ChoiceKind::InvertedBottleneck:
        return "ib-e" + std::to_string(expansion) + "k" + std::to_string(kernel) +
               (se ? "-se" : "");
    }
    return "?";
  }

  static ChoiceSpec parse(const std::string& s) {
    if (s == "skip") return skip();
    if (s == "els") return els();
    if (s == "els-relu") return els(true);
    // ib-e<x>k<y>[-se]
    if (s.rfind("ib-e", 0) == 0) {
      const std::size_t kpos = s.find('k', 4);
      if (kpos != std::string::npos) {
        bool with_se = false;
        std::string kdigits = s.substr(kpos + 1);
        if (kdigits.size() > 3 && kdigits.substr(kdigits.size() - 3) == "-se") {
          with_se = true;
          kdigits = kdigits.substr(0, kdigits.size() - 3);
        }
        try {
          const int e = std::stoi(s.substr(4, kpos - 4));
          const int k = std::stoi(kdigits);
          return ib(e, k, with_se);
        } catch (const std::exception&) {
        }
      }
    }
    throw std::invalid_argument("choice: cannot parse '" + s +
                                "' (want skip, els, els-relu, or ib-e<x>k<y>[-se])");
  }
};

struct LayerSpec {
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  std::vector<ChoiceSpec> choices;
};

struct SpaceSpec {
  std::string name;
  int input_channels = 3;
  int input_size = 16;  // square input
  int classes = 4;
  int stem_channels = 8;
  int tail_channels = 32;
  std::vector<LayerSpec> layers;

  int layer_count() const { return static_cast<int>(layers.size()); }

  bool rectangular() const {
    for (const auto& l : layers) {
      if (l.choices.size() != layers[0].choices.size()) return false;
    }
    return true;
  }

  void validate() const {
    if (classes < 2) throw std::invalid_argument("space '" + name + "': classes must be >= 2");
    if (input_channels < 1 || input_size < 4 || stem_channels < 1 || tail_channels < 1) {
      throw std::invalid_argument("space '" + name + "': bad input/stem/tail sizing");
    }
    if (layers.empty()) throw std::invalid_argument("space '" + name + "': no layers");
    int prev = stem_channels;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      const std::string where = "space '" + name + "' layer " + std::to_string(i);
      if (l.choices.size() < 2) throw std::invalid_argument(where + ": needs >= 2 choices");
      if (l.in_channels != prev) {
        throw std::invalid_argument(where + ": in_channels " + std::to_string(l.in_channels) +
                                    " breaks the channel chain (expected " +
                                    std::to_string(prev) + ")");
      }
      if (l.out_channels < 1) throw std::invalid_argument(where + ": out_channels must be >= 1");
      if (l.stride != 1 && l.stride != 2) {
        throw std::invalid_argument(where + ": stride must be 1 or 2");
      }
      for (const auto& c : l.choices) {
        switch (c.kind) {
          case ChoiceKind::Skip:
            if (l.stride != 1) {
              throw std::invalid_argument(where + ": skip choice illegal at stride " +
                                          std::to_string(l.stride));
            }
            if (l.in_channels != l.out_channels) {
              throw std::invalid_argument(where + ": skip choice illegal with channel change " +
                                          std::to_string(l.in_channels) + " -> " +
                                          std::to_string(l.out_channels));
            }
            break;
          case ChoiceKind::Els:
            if (l.stride != 1) {
              throw std::invalid_argument(where + ": els choice illegal at stride " +
                                          std::to_string(l.stride));
            }
            break;
          case ChoiceKind::InvertedBottleneck:
            if (c.kernel != 3 && c.kernel != 5 && c.kernel != 7) {
              throw std::invalid_argument(where + ": kernel " + std::to_string(c.kernel) +
                                          " not in {3,5,7}");
            }
            if (c.expansion != 1 && c.expansion != 2 && c.expansion != 3 && c.expansion != 6) {
              throw std::invalid_argument(where + ": expansion " + std::to_string(c.expansion) +
                                          " not in {1,2,3,6}");
            }
            break;
        }
      }
      prev = l.out_channels;
    }
  }
};

struct Architecture {
  std::vector<int> genes;

  bool operator==(const Architecture&) const = default;
  bool operator<(const Architecture& o) const { return genes < o.genes; }

  std::string str() const {
    std::string s;
    for (std::size_t i = 0; i < genes.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(genes[i]);
    }
    return s;
  }

  static Architecture parse(const std::string& s) {
    Architecture a;
    std::size_t pos = 0;
    while (pos <= s.size()) {
      std::size_t comma = s.find(',', pos);
      if (comma == std::string::npos) comma = s.size();
      const std::string tok = s.substr(pos, comma - pos);
      try {
        a.genes.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw std::invalid_argument("arch: cannot parse gene '" + tok + "' in '" + s + "'");
      }
      pos = comma + 1;
      if (comma == s.size()) break;
    }
    return a;
  }
};

inline void validate_arch(const SpaceSpec& spec, const Architecture& arch) {
  if (arch.genes.size() != spec.layers.size()) {
    throw std::invalid_argument("arch '" + arch.str() + "': " +
                                std::to_string(arch.genes.size()) + " genes for " +
                                std::to_string(spec.layers.size()) + " layers");
  }
  for (std::size_t i = 0; i < arch.genes.size(); ++i) {
    const int g = arch.genes[i];
    const int n = static_cast<int>(spec.layers[i].choices.size());
    if (g < 0 || g >= n) {
      throw std::invalid_argument("arch '" + arch.str() + "': gene " + std::to_string(g) +
                                  " out of range [0," + std::to_string(n) + ") at layer " +
                                  std::to_string(i));
    }
  }
}

inline Architecture sample_uniform(const SpaceSpec& spec, Rng& rng) {
  Architecture a;
  a.genes.reserve(spec.layers.size());
  for (const auto& l : spec.layers) {
    a.genes.push_back(static_cast<int>(rng.next_below(l.choices.size())));
  }
  return a;
}

// One fair group: m architectures such that every layer's genes across the
// group form a permutation of 0..m-1 (sampling without replacement per layer).
inline std::vector<Architecture> sample_fair_group(const SpaceSpec& spec, Rng& rng) {
  if (!spec.rectangular()) {
    throw std::invalid_argument("space '" + spec.name +
                                "': fair sampling needs the same choice count at every layer");
  }
  const int m = static_cast<int>(spec.layers[0].choices.size());
  const int L = spec.layer_count();
  std::vector<std::vector<int>> cols(L);
  for (int l = 0; l < L; ++l) {
    cols[l].resize(m);
    for (int c = 0; c < m; ++c) cols[l][c] = c;
    // Fisher-Yates with the shared stream
    for (int i = m - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.next_below(i + 1));
      std::swap(cols[l][i], cols[l][j]);
    }
  }
  std::vector<Architecture> group(m);
  for (int i = 0; i < m; ++i) {
    group[i].genes.resize(L);
    for (int l = 0; l < L; ++l) group[i].genes[l] = cols[l][i];
  }
  return group;
}

inline Architecture all_skip_arch(const SpaceSpec& spec) {
  Architecture a;
  for (const auto& l : spec.layers) {
    int gene = -1;
    for (std::size_t c = 0; c < l.choices.size(); ++c) {
      if (l.choices[c].kind != ChoiceKind::InvertedBottleneck) gene = static_cast<int>(c);
    }
    if (gene < 0) {
      throw std::invalid_argument("space '" + spec.name +
                                  "': a layer has no skip/stabilizer choice");
    }
    a.genes.push_back(gene);
  }
  return a;
}

// Every architecture of a small space, in lexicographic gene order.
inline std::vector<Architecture> enumerate_space(const SpaceSpec& spec, std::size_t budget) {
  std::size_t total = 1;
  for (const auto& l : spec.layers) {
    total *= l.choices.size();
    if (total > budget) {
      throw std::invalid_argument("space '" + spec.name + "': size exceeds enumeration budget " +
                                  std::to_string(budget) + "; use sampling instead");
    }
  }
  std::vector<Architecture> all;
  all.reserve(total);
  Architecture cur;
  cur.genes.assign(spec.layers.size(), 0);
  for (std::size_t i = 0; i < total; ++i) {
    all.push_back(cur);
    for (int l = spec.layer_count() - 1; l >= 0; --l) {
      if (++cur.genes[l] < static_cast<int>(spec.layers[l].choices.size())) break;
      cur.genes[l] = 0;
    }
  }
  return all;
}

// ---- serialization ----

inline nlohmann::json space_to_json(const SpaceSpec& spec) {
  nlohmann::json j;
  j["name"] = spec.name;
  j["input"] = {{"channels", spec.input_channels}, {"size", spec.input_size}};
  j["classes"] = spec.classes;
  j["stem_channels"] = spec.stem_channels;
  j["tail_channels"] = spec.tail_channels;
  j["layers"] = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    nlohmann::json jl;
    jl["in"] = l.in_channels;
    jl["out"] = l.out_channels;
    jl["stride"] = l.stride;
    jl["choices"] = nlohmann::json::array();
    for (const auto& c : l.choices) jl["choices"].push_back(c.str());
    j["layers"].push_back(jl);
  }
  return j;
}

inline SpaceSpec space_from_json(const nlohmann::json& j) {
  SpaceSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    spec.input_channels = j.at("input").at("channels").get<int>();
    spec.input_size = j.at("input").at("size").get<int>();
    spec.classes = j.at("classes").get<int>();
    spec.stem_channels = j.at("stem_channels").get<int>();
    spec.tail_channels = j.at("tail_channels").get<int>();
    for (const auto& jl : j.at("layers")) {
      LayerSpec l;
      l.in_channels = jl.at("in").get<int>();
      l.out_channels = jl.at("out").get<int>();
      l.stride = jl.at("stride").get<int>();
      for (const auto& jc : jl.at("choices")) l.choices.push_back(ChoiceSpec::parse(jc));
      spec.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("space config: ") + e.what());
  }
  spec.validate();
  return spec;
}

// ---- canned spaces ----

// Toy space: 16x16 input, 4 classes, 4 searchable layers at 8 channels with
// choices {IB-E3K3, IB-E3K5, skip}; 81 architectures, small enough to
// enumerate exhaustively.
inline SpaceSpec t1_space() {
  SpaceSpec s;
  s.name = "t1";
  s.input_channels = 3;
  s.input_size = 16;
  s.classes = 4;
  s.stem_channels = 8;
  s.tail_channels = 32;
  for (int i = 0; i < 4; ++i) {
    LayerSpec l;
    l.in_channels = 8;
    l.out_channels = 8;
    l.stride = 1;
    l.choices = {ChoiceSpec::ib(3, 3), ChoiceSpec::ib(3, 5), ChoiceSpec::skip()};
    s.layers.push_back(l);
  }
  s.validate();
  return s;
}

// Same space with every skip swapped for a learnable stabilizer (optionally
// the relu probe variant). Architectures transfer between the two unchanged.
inline SpaceSpec with_stabilizers(const SpaceSpec& spec, bool relu = false) {
  SpaceSpec s = spec;
  s.name = spec.name + (relu ? "-els-relu" : "-els");
  for (auto& l : s.layers) {
    for (auto& c : l.choices) {
      if (c.kind == ChoiceKind::Skip) c = ChoiceSpec::els(relu);
    }
  }
  s.validate();
  return s;
}

// Deploy view: stabilizers fold away at export, so anything costing or
// shipping an architecture should see plain skips again.
inline SpaceSpec without_stabilizers(const SpaceSpec& spec) {
  SpaceSpec s = spec;
  for (const char* suffix : {"-els-relu", "-els"}) {
    const std::size_t n = std::string(suffix).size();
    if (s.name.size() > n && s.name.compare(s.name.size() - n, n, suffix) == 0) {
      s.name.resize(s.name.size() - n);
      break;
    }
  }
  for (auto& l : s.layers) {
    for (auto& c : l.choices) {
      if (c.kind == ChoiceKind::Els) c = ChoiceSpec::skip();
    }
  }
  s.validate();
  return s;
}

// 19-layer mobile space: 6 inverted-bottleneck variants ordered by
// o = (x-3) + (y-3)/2 plus skip as the last choice where legal. Layers that
// change stride or width drop the skip (a parameter-free identity cannot do
// either), so the space is ragged; uniform-path training accepts it, fair
// grouping rejects it.
inline SpaceSpec s1_space(bool with_se_variants = false) {
  SpaceSpec s;
  s.name = with_se_variants ? "s2" : "s1";
  s.input_channels = 3;
  s.input_size = 224;
  s.classes = 1000;
  s.stem_channels = 16;  // stride-2 stem, then 19 searchable layers
  s.tail_channels = 1280;
  struct Stage {
    int out, blocks, stride;
  };
  const std::vector<Stage> plan = {{24, 2, 2}, {40, 4, 2}, {80, 4, 2},
                                   {96, 4, 1}, {192, 4, 2}, {320, 1, 1}};
  int in = s.stem_channels;
  for (const auto& st : plan) {
    for (int b = 0; b < st.blocks; ++b) {
      LayerSpec l;
      l.in_channels = in;
      l.out_channels = st.out;
      l.stride = b == 0 ? st.stride : 1;
      for (int y = 3; y <= 7; y += 2) {
        for (int x : {3, 6}) {
          l.choices.push_back(ChoiceSpec::ib(x, y));
          if (with_se_variants) l.choices.push_back(ChoiceSpec::ib(x, y, true));
        }
      }
      std::sort(l.choices.begin(), l.choices.end(), [](const ChoiceSpec& a, const ChoiceSpec& b) {
        const auto order = [](const ChoiceSpec& c) {
          return (c.expansion - 3) + (c.kernel - 3) / 2 + (c.se ? 6 : 0);
        };
        return order(a) < order(b);
      });
      if (l.stride == 1 && l.in_channels == l.out_channels) {
        l.choices.push_back(ChoiceSpec::skip());
      }
      s.layers.push_back(l);
      in = st.out;
    }
  }
  s.validate();
  return s;
}

}  // namespace scnt
