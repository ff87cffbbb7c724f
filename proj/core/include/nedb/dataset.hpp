#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nedb/forgery.hpp"
#include "nedb/image_io.hpp"
#include "nedb/morphology.hpp"
#include "nedb/tensor.hpp"

namespace nedb {

/// One manifest row. Paths are absolute after reading; `provenance` carries
/// the manifest line number or the generator description.
struct SampleRecord {
  std::string image_path;
  std::string mask_path;
  std::optional<std::string> edge_path;
  std::string provenance;
};

/// Raised for malformed manifests or rows pointing at missing files.
class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// CSV `image_path,mask_path[,edge_path]` with an optional header row; paths
/// are resolved against the manifest's directory.
std::vector<SampleRecord> read_manifest(const std::filesystem::path& path);
/// Writes paths relative to the manifest's directory with a header row.
void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records);

/// Checks that every referenced file exists and that extents agree.
void validate_records(const std::vector<SampleRecord>& records);

struct ObjectSource {
  std::string name;
  Image image;
  BinaryMask object;
};

/// Pairs `images_dir/<stem>.ppm` with `objects_dir/<stem>.pgm`, sorted by
/// stem. Throws when no pair is found.
std::vector<ObjectSource> load_object_sources(const std::filesystem::path& images_dir,
                                              const std::filesystem::path& objects_dir);
/// `count` procedural sources of the given size, seeds seed, seed+1, ...
std::vector<ObjectSource> synthetic_object_sources(int count, int size, std::uint64_t seed);

struct GenerateOptions {
  int count = 10;
  std::uint64_t seed = 0;
  ForgeryRanges ranges;
  StructuringElement edge_element = default_edge_element();
};

/// Writes images/, masks/, edges/, manifest.csv and gen_params.csv under
/// `out_dir`. Sample i is drawn from a generator seeded with seed + i.
std::vector<SampleRecord> generate_dataset(const std::vector<ObjectSource>& sources, const GenerateOptions& options,
                                           const std::filesystem::path& out_dir);

/// Writes edge masks for every record into `out_dir/edges` and returns the
/// records with edge paths set.
std::vector<SampleRecord> generate_edge_masks(const std::vector<SampleRecord>& records, const StructuringElement& se,
                                              const std::filesystem::path& out_dir);

/// Network-ready sample at a fixed square resolution.
struct LoadedSample {
  std::string id;
  Tensor image;               // 1 x 3 x S x S, normalized BGR
  std::vector<double> mask;   // S x S in {0, 1}
  std::vector<double> edge;   // S/4 x S/4 in {0, 1}
  int size = 0;
};

/// OR over factor x factor blocks (max pooling with kernel = stride = factor).
std::vector<double> downsample_max(const BinaryMask& mask, int factor);

/// Reads and resizes one record. The edge mask comes from the record when
/// present and `prefer_record_edge` is set, otherwise from edge_gt(mask, se).
LoadedSample load_sample(const SampleRecord& record, int size, const StructuringElement& se,
                         bool prefer_record_edge = true);

/// Image stem used as the report id.
std::string sample_id(const SampleRecord& record);

}  // namespace nedb
