#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "json.hpp"
#include "spade/core.hpp"

namespace spade::io {

/// Unnormalized contents of a particle file; the normalizer is a policy
/// decision made by the caller.
struct ParticleData {
  PointSet positives;
  PointSet negatives;

  SignedParticleSet with_policy(NormalizerPolicy policy) const {
    return SignedParticleSet::with_policy(positives, negatives, policy);
  }
};

inline void write_text(std::ostream& os, const PointSet& pos, const PointSet& neg) {
  require(pos.dim() == neg.dim(), Errc::dimension_mismatch, "populations differ in dimension");
  const auto old_prec = os.precision(std::numeric_limits<double>::max_digits10);
  os << pos.dim() << ' ' << pos.size() << ' ' << neg.size() << '\n';
  for (const PointSet* ps : {&pos, &neg}) {
    for (Index i = 0; i < ps->size(); ++i) {
      const auto x = (*ps)[i];
      for (std::size_t j = 0; j < x.size(); ++j) {
        if (j) os << ' ';
        os << x[j];
      }
      os << '\n';
    }
  }
  os.precision(old_prec);
}

inline ParticleData read_text(std::istream& is) {
  long long d = 0, p = 0, m = 0;
  if (!(is >> d >> p >> m) || d <= 0 || p < 0 || m < 0) {
    fail(Errc::parse_error, "expected header 'd P M' with d > 0 and P, M >= 0");
  }
  auto read_block = [&](long long count, const char* what) {
    std::vector<double> coords(static_cast<std::size_t>(count * d));
    for (auto& c : coords) {
      if (!(is >> c)) fail(Errc::parse_error, std::string("truncated ") + what + " block");
    }
    return PointSet(static_cast<std::size_t>(d), std::move(coords));
  };
  ParticleData out{read_block(p, "positive"), read_block(m, "negative")};
  std::string trailing;
  if (is >> trailing) fail(Errc::parse_error, "unexpected trailing content '" + trailing + "'");
  return out;
}

inline nlohmann::json to_json(const PointSet& pos, const PointSet& neg) {
  auto rows = [](const PointSet& ps) {
    nlohmann::json arr = nlohmann::json::array();
    for (Index i = 0; i < ps.size(); ++i) {
      const auto x = ps[i];
      arr.push_back(std::vector<double>(x.begin(), x.end()));
    }
    return arr;
  };
  return {{"dim", pos.dim()}, {"positives", rows(pos)}, {"negatives", rows(neg)}};
}

inline ParticleData from_json(const nlohmann::json& j) {
  try {
    const auto d = j.at("dim").get<std::size_t>();
    auto rows = [&](const char* key) {
      PointSet ps(d);
      for (const auto& row : j.at(key)) ps.push_back(row.get<std::vector<double>>());
      return ps;
    };
    return {rows("positives"), rows("negatives")};
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, e.what());
  }
}

enum class Format { text, json };

inline Format format_for_path(const std::filesystem::path& p) {
  return p.extension() == ".json" ? Format::json : Format::text;
}

inline std::string to_string(const PointSet& pos, const PointSet& neg, Format f) {
  std::ostringstream os;
  if (f == Format::json) {
    os << to_json(pos, neg).dump() << '\n';
  } else {
    write_text(os, pos, neg);
  }
  return os.str();
}

/// Writes to a sibling temporary file and renames it over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(Errc::io_error, "cannot open " + tmp.string() + " for writing");
    os << contents;
    os.flush();
    if (!os) fail(Errc::io_error, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    fail(Errc::io_error, "cannot rename onto " + path.string() + ": " + ec.message());
  }
}

inline void save(const std::filesystem::path& path, const PointSet& pos, const PointSet& neg) {
  write_file_atomic(path, to_string(pos, neg, format_for_path(path)));
}

inline void save(const std::filesystem::path& path, const SignedParticleSet& s) {
  save(path, s.positives, s.negatives);
}

inline ParticleData load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::io_error, "cannot open " + path.string());
  if (format_for_path(path) == Format::json) {
    try {
      return from_json(nlohmann::json::parse(is));
    } catch (const nlohmann::json::parse_error& e) {
      fail(Errc::parse_error, e.what());
    }
  }
  return read_text(is);
}

}  // namespace spade::io
