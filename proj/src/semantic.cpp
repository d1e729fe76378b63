#include "seedgrow/semantic.hpp"

#include "seedgrow/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace seedgrow {

namespace {

constexpr char kPixelMagic[4] = {'P', 'F', '3', 'D'};

}  // namespace

const PixelFeatureMap* PixelFeatureSource::find(std::string_view view_id) const {
  for (const auto& m : maps)
    if (m.view_id == view_id) return &m;
  return nullptr;
}

void PixelFeatureSource::validate(const std::vector<CameraView>& views) const {
  for (const auto& m : maps) {
    if (m.dim != dim())
      throw ValidationError("pixel features of view '" + m.view_id + "' have dimension " + std::to_string(m.dim) +
                            ", expected " + std::to_string(dim()));
    const CameraView* view = nullptr;
    for (const auto& v : views)
      if (v.view_id == m.view_id) view = &v;
    if (!view) throw ValidationError("pixel features for unknown view '" + m.view_id + "'");
    if (view->width != m.width || view->height != m.height)
      throw ValidationError("pixel features of view '" + m.view_id + "' are " + std::to_string(m.width) + "x" +
                            std::to_string(m.height) + ", view is " + std::to_string(view->width) + "x" +
                            std::to_string(view->height));
    for (float x : m.values)
      if (!std::isfinite(x)) throw ValidationError("non-finite pixel feature in view '" + m.view_id + "'");
  }
}

PixelFeatureMap read_pixel_features(const std::filesystem::path& path, const std::string& view_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  std::uint32_t dims[3];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kPixelMagic, 4) != 0) throw ParseError(path.string() + ": byte 0: bad magic");
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in) throw ParseError(path.string() + ": byte 4: truncated header");
  PixelFeatureMap m;
  m.view_id = view_id;
  m.width = static_cast<int>(dims[0]);
  m.height = static_cast<int>(dims[1]);
  m.dim = dims[2];
  if (m.width <= 0 || m.height <= 0 || m.dim == 0) throw ParseError(path.string() + ": byte 4: empty dimensions");
  m.values.resize(static_cast<std::size_t>(m.width) * m.height * m.dim);
  in.read(reinterpret_cast<char*>(m.values.data()), static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != m.values.size() * sizeof(float))
    throw ParseError(path.string() + ": byte " + std::to_string(16 + in.gcount()) + ": truncated feature data");
  return m;
}

void write_pixel_features(const std::filesystem::path& path, const PixelFeatureMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint32_t dims[3] = {static_cast<std::uint32_t>(map.width), static_cast<std::uint32_t>(map.height),
                                 static_cast<std::uint32_t>(map.dim)};
  out.write(kPixelMagic, 4);
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(map.values.data()),
            static_cast<std::streamsize>(map.values.size() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
}

PixelFeatureSource load_pixel_features(const std::filesystem::path& dir, const std::vector<CameraView>& views) {
  PixelFeatureSource src;
  for (const auto& v : views) {
    const auto p = dir / (v.view_id + ".pf3d");
    if (std::filesystem::exists(p)) src.maps.push_back(read_pixel_features(p, v.view_id));
  }
  src.validate(views);
  return src;
}

void save_pixel_features(const std::filesystem::path& dir, const PixelFeatureSource& source) {
  std::filesystem::create_directories(dir);
  for (const auto& m : source.maps) write_pixel_features(dir / (m.view_id + ".pf3d"), m);
}

void TextQuery::validate() const {
  double n = 0.0;
  for (double x : embedding) {
    if (!std::isfinite(x)) throw ValidationError("query '" + query + "' has a non-finite embedding entry");
    n += x * x;
  }
  if (!(n > 0.0)) throw ValidationError("query '" + query + "' has a zero embedding");
}

std::vector<TextQuery> read_queries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": byte " + std::to_string(e.byte) + ": " + e.what());
  }
  std::vector<TextQuery> out;
  auto one = [&](const nlohmann::json& q) {
    if (!q.is_object() || !q.contains("query") || !q.contains("embedding"))
      throw ParseError(path.string() + ": query entries need 'query' and 'embedding'");
    TextQuery t;
    t.query = q.at("query").get<std::string>();
    t.embedding = q.at("embedding").get<std::vector<double>>();
    t.validate();
    out.push_back(std::move(t));
  };
  if (j.is_array()) {
    for (const auto& q : j) one(q);
  } else {
    one(j);
  }
  return out;
}

void write_queries(const std::filesystem::path& path, const std::vector<TextQuery>& queries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& q : queries) j.push_back({{"query", q.query}, {"embedding", q.embedding}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

PointFeatures aggregate_point_features(const std::vector<ViewMapping>& mappings, const PixelFeatureSource& source) {
  PointFeatures pf;
  pf.dim = source.dim();
  const std::size_t n = mappings.empty() ? 0 : mappings.front().point_count();
  std::vector<const PixelFeatureMap*> maps(mappings.size());
  for (std::size_t t = 0; t < mappings.size(); ++t) {
    maps[t] = source.find(mappings[t].view_id);
    if (!maps[t]) throw ValidationError("no pixel features for view '" + mappings[t].view_id + "'");
    if (mappings[t].point_count() != n) throw ValidationError("mappings disagree on the point count");
  }
  pf.values.assign(n * pf.dim, 0.0);
  pf.flagged.assign(n, 0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(n); ++s) {
    const auto i = static_cast<std::size_t>(s);
    double* row = pf.values.data() + i * pf.dim;
    std::size_t seen = 0;
    for (std::size_t t = 0; t < mappings.size(); ++t) {
      if (!mappings[t].visible[i]) continue;
      const auto [u, v] = mappings[t].pixel[i];
      const auto f = maps[t]->at(u, v);
      for (std::size_t d = 0; d < pf.dim; ++d) row[d] += f[d];
      ++seen;
    }
    bool nonzero = false;
    if (seen > 0)
      for (std::size_t d = 0; d < pf.dim; ++d) {
        row[d] /= static_cast<double>(seen);
        nonzero = nonzero || row[d] != 0.0;
      }
    pf.flagged[i] = nonzero ? 0 : 1;
  }
  return pf;
}

std::vector<double> proposal_feature(const PointSetInstance& proposal, const PointFeatures& features) {
  if (proposal.points.empty()) throw ValidationError("proposal feature of an empty proposal");
  std::vector<double> mean(features.dim, 0.0);
  std::size_t used = 0;
  for (PointIndex i : proposal.points) {
    if (features.flagged[i]) continue;
    const auto r = features.row(i);
    for (std::size_t d = 0; d < features.dim; ++d) mean[d] += r[d];
    ++used;
  }
  if (used == 0) throw PipelineError("search", "proposal has no point with a defined feature");
  for (auto& x : mean) x /= static_cast<double>(used);
  return mean;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    dot += a[d] * b[d];
    na += a[d] * a[d];
    nb += b[d] * b[d];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<RankedProposal> rank_by_query(const std::vector<std::vector<double>>& proposal_features,
                                          const TextQuery& query) {
  query.validate();
  std::vector<RankedProposal> out;
  for (std::size_t k = 0; k < proposal_features.size(); ++k) {
    if (proposal_features[k].size() != query.embedding.size())
      throw ValidationError("query '" + query.query + "' has dimension " + std::to_string(query.embedding.size()) +
                            ", proposal features have " + std::to_string(proposal_features[k].size()));
    out.push_back({k, cosine(proposal_features[k], query.embedding)});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedProposal& a, const RankedProposal& b) { return a.score > b.score; });
  return out;
}

}  // namespace seedgrow
