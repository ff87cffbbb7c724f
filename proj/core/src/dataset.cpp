#include "nedb/dataset.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

#include "nedb/filters.hpp"
#include "nedb/network.hpp"

namespace fs = std::filesystem;

namespace nedb {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string relative_to(const fs::path& target, const fs::path& base) {
  return fs::relative(fs::absolute(target), fs::absolute(base)).generic_string();
}

std::string index_name(int i) { return fmt::format("{:05d}", i); }

}  // namespace

std::vector<SampleRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError(fmt::format("cannot open manifest {}", path.string()));
  const fs::path base = fs::absolute(path).parent_path();
  std::vector<SampleRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto fields = split_csv(line);
    for (auto& f : fields) f = trim(f);
    if (fields.size() >= 2 && fields[0] == "image_path" && fields[1] == "mask_path") continue;
    if (fields.size() < 2 || fields.size() > 3) {
      throw ManifestError(fmt::format("{}:{}: expected image_path,mask_path[,edge_path], got '{}'", path.string(),
                                      line_no, line));
    }
    SampleRecord r;
    r.image_path = (base / fields[0]).lexically_normal().string();
    r.mask_path = (base / fields[1]).lexically_normal().string();
    if (fields.size() == 3 && !fields[2].empty()) r.edge_path = (base / fields[2]).lexically_normal().string();
    r.provenance = fmt::format("{}:{}", path.filename().string(), line_no);
    records.push_back(std::move(r));
  }
  return records;
}

void write_manifest(const fs::path& path, const std::vector<SampleRecord>& records) {
  const fs::path base = fs::absolute(path).parent_path();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ManifestError(fmt::format("cannot write manifest {}", path.string()));
  const bool with_edges = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.edge_path.has_value(); });
  out << (with_edges ? "image_path,mask_path,edge_path\n" : "image_path,mask_path\n");
  for (const auto& r : records) {
    out << relative_to(r.image_path, base) << ',' << relative_to(r.mask_path, base);
    if (with_edges) out << ',' << (r.edge_path ? relative_to(*r.edge_path, base) : "");
    out << '\n';
  }
}

void validate_records(const std::vector<SampleRecord>& records) {
  for (const auto& r : records) {
    for (const auto* p : {&r.image_path, &r.mask_path}) {
      if (!fs::exists(*p)) throw ManifestError(fmt::format("{}: missing file {}", r.provenance, *p));
    }
    if (r.edge_path && !fs::exists(*r.edge_path)) {
      throw ManifestError(fmt::format("{}: missing file {}", r.provenance, *r.edge_path));
    }
  }
}

std::vector<ObjectSource> load_object_sources(const fs::path& images_dir, const fs::path& objects_dir) {
  if (!fs::is_directory(images_dir)) throw ManifestError(fmt::format("not a directory: {}", images_dir.string()));
  if (!fs::is_directory(objects_dir)) throw ManifestError(fmt::format("not a directory: {}", objects_dir.string()));
  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(images_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") images.push_back(e.path());
  }
  std::sort(images.begin(), images.end());
  std::vector<ObjectSource> out;
  for (const auto& p : images) {
    const fs::path obj = objects_dir / (p.stem().string() + ".pgm");
    if (!fs::exists(obj)) continue;
    ObjectSource s{p.stem().string(), read_image(p.string()), read_mask(obj.string())};
    if (s.object.width != s.image.width || s.object.height != s.image.height) {
      throw ManifestError(fmt::format("object mask {} does not match image {}", obj.string(), p.string()));
    }
    if (s.object.count() == 0) throw ManifestError(fmt::format("object mask {} is empty", obj.string()));
    out.push_back(std::move(s));
  }
  if (out.empty()) {
    throw ManifestError(fmt::format("no image/object pairs found in {} and {}", images_dir.string(), objects_dir.string()));
  }
  return out;
}

std::vector<ObjectSource> synthetic_object_sources(int count, int size, std::uint64_t seed) {
  std::vector<ObjectSource> out;
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(i));
    SyntheticSource s = synthesize_source(size, rng);
    out.push_back({fmt::format("synthetic{:04d}", i), std::move(s.image), std::move(s.object)});
  }
  return out;
}

std::vector<SampleRecord> generate_dataset(const std::vector<ObjectSource>& sources, const GenerateOptions& options,
                                           const fs::path& out_dir) {
  if (sources.empty()) throw std::invalid_argument("no forgery sources");
  if (options.count < 1) throw std::invalid_argument("forgery count must be positive");
  for (const char* sub : {"images", "masks", "edges"}) fs::create_directories(out_dir / sub);

  std::ofstream params(out_dir / "gen_params.csv", std::ios::binary);
  params << "index,seed,type,source,destination,rotation_deg,scale,paste_x,paste_y,blur_sigma,mask_area\n";
  std::vector<SampleRecord> records;
  for (int i = 0; i < options.count; ++i) {
    const std::uint64_t seed = options.seed + static_cast<std::uint64_t>(i);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, sources.size() - 1);
    std::bernoulli_distribution splice(options.ranges.splice_probability);
    const std::size_t src = pick(rng);
    ForgeryType type = (sources.size() > 1 && splice(rng)) ? ForgeryType::kSplice : ForgeryType::kCopyMove;
    std::size_t dst = src;
    if (type == ForgeryType::kSplice) {
      std::uniform_int_distribution<std::size_t> other(0, sources.size() - 2);
      dst = other(rng);
      if (dst >= src) ++dst;
    }
    const ObjectSource& s = sources[src];
    const ObjectSource& d = sources[dst];

    ForgeryResult result;
    ForgeryParams p;
    bool ok = false;
    for (int attempt = 0; attempt < 16 && !ok; ++attempt) {
      p = sample_forgery_params(rng, options.ranges, s.object, d.image.width, d.image.height, type);
      try {
        result = generate_forgery(s.image, s.object, d.image, p);
        ok = true;
      } catch (const std::invalid_argument&) {
      }
    }
    if (!ok) throw std::runtime_error(fmt::format("sample {}: could not place the object inside the canvas", i));

    const std::string name = index_name(i);
    SampleRecord r;
    r.image_path = (out_dir / "images" / (name + ".ppm")).string();
    r.mask_path = (out_dir / "masks" / (name + ".pgm")).string();
    r.edge_path = (out_dir / "edges" / (name + ".pgm")).string();
    r.provenance = fmt::format("generator seed {}", seed);
    write_image(r.image_path, result.image);
    write_mask(r.mask_path, result.mask);
    write_mask(*r.edge_path, edge_gt(result.mask, options.edge_element));
    params << fmt::format("{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", i, seed, to_string(type), s.name,
                          d.name, p.rotation_deg, p.scale, p.paste_x, p.paste_y, p.blur_sigma, result.pasted_pixels);
    records.push_back(std::move(r));
  }
  write_manifest(out_dir / "manifest.csv", records);
  return records;
}

std::vector<SampleRecord> generate_edge_masks(const std::vector<SampleRecord>& records, const StructuringElement& se,
                                              const fs::path& out_dir) {
  fs::create_directories(out_dir / "edges");
  std::vector<SampleRecord> out = records;
  for (auto& r : out) {
    if (!fs::exists(r.mask_path)) throw ManifestError(fmt::format("{}: missing mask {}", r.provenance, r.mask_path));
    const fs::path edge = out_dir / "edges" / (fs::path(r.mask_path).stem().string() + ".pgm");
    write_mask(edge.string(), edge_gt(read_mask(r.mask_path), se));
    r.edge_path = edge.string();
  }
  return out;
}

std::vector<double> downsample_max(const BinaryMask& mask, int factor) {
  if (factor < 1 || mask.height % factor != 0 || mask.width % factor != 0) {
    throw std::invalid_argument(fmt::format("cannot pool a {}x{} mask by {}", mask.width, mask.height, factor));
  }
  const int h = mask.height / factor, w = mask.width / factor;
  std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (mask.at(r, c)) out[static_cast<std::size_t>(r / factor) * w + c / factor] = 1.0;
    }
  }
  return out;
}

std::string sample_id(const SampleRecord& record) { return fs::path(record.image_path).stem().string(); }

LoadedSample load_sample(const SampleRecord& record, int size, const StructuringElement& se, bool prefer_record_edge) {
  Image image = read_image(record.image_path);
  if (image.channels != 3) throw ManifestError(fmt::format("{}: {} is not an RGB image", record.provenance, record.image_path));
  BinaryMask mask = read_mask(record.mask_path);
  if (mask.width != image.width || mask.height != image.height) {
    throw ManifestError(fmt::format("{}: mask extents {}x{} differ from image {}x{}", record.provenance, mask.width,
                                    mask.height, image.width, image.height));
  }
  image = resize_bilinear(image, size, size);
  mask = resize_nearest(mask, size, size);
  BinaryMask edge;
  if (prefer_record_edge && record.edge_path) {
    edge = resize_nearest(read_mask(*record.edge_path), size, size);
  } else {
    edge = edge_gt(mask, se);
  }

  std::vector<std::uint8_t> bgr(image.pixels.size());
  for (std::size_t i = 0; i < image.pixels.size(); i += 3) {
    bgr[i] = image.pixels[i + 2];
    bgr[i + 1] = image.pixels[i + 1];
    bgr[i + 2] = image.pixels[i];
  }
  LoadedSample s;
  s.id = sample_id(record);
  s.size = size;
  s.image = normalize_input(bgr, size, size);
  s.mask.assign(mask.bits.begin(), mask.bits.end());
  s.edge = downsample_max(edge, 4);
  return s;
}

}  // namespace nedb
