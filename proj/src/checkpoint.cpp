#include "stc/checkpoint.hpp"

#include <cstring>

#include <json.hpp>

namespace stc {

namespace {

using nlohmann::json;

json config_to_json(const BackboneConfig& c) {
  return json{
      {"stage_blocks", c.stage_blocks},
      {"stage_out_channels", c.stage_out_channels},
      {"cardinality", c.cardinality},
      {"se_ratio", c.se_ratio},
      {"stem_channels", c.stem_channels},
      {"fuse_channels", c.fuse_channels},
      {"input_resolution", c.input_resolution},
      {"n_frames", c.n_frames},
      {"n_classes", c.n_classes},
  };
}

BackboneConfig config_from_json(const json& j) {
  BackboneConfig c;
  j.at("stage_blocks").get_to(c.stage_blocks);
  j.at("stage_out_channels").get_to(c.stage_out_channels);
  j.at("cardinality").get_to(c.cardinality);
  j.at("se_ratio").get_to(c.se_ratio);
  j.at("stem_channels").get_to(c.stem_channels);
  j.at("fuse_channels").get_to(c.fuse_channels);
  j.at("input_resolution").get_to(c.input_resolution);
  j.at("n_frames").get_to(c.n_frames);
  j.at("n_classes").get_to(c.n_classes);
  return c;
}

}  // namespace

std::vector<uint8_t> checkpoint_encode(STCNetModel& model, int epoch) {
  io::ByteWriter w;
  w.str("STCW");
  w.u32(1);
  json header{
      {"config", config_to_json(model.config)},
      {"variant", variant_name(model.variant)},
      {"seed", model.seed},
      {"epoch", epoch},
  };
  std::string hs = header.dump();
  w.u32(static_cast<uint32_t>(hs.size()));
  w.str(hs);

  auto params = model.parameters();
  auto bufs = model.buffers();
  w.u32(static_cast<uint32_t>(params.size() + bufs.size()));
  for (auto& p : params) io::write_named_tensor(w, p.name, p.tensor);
  for (auto& b : bufs) {
    Tensor t(Shape{static_cast<int64_t>(b.data->size())},
             std::vector<double>(b.data->begin(), b.data->end()));
    io::write_named_tensor(w, b.name, t);
  }
  return w.take();
}

STCNetModel checkpoint_decode(const std::vector<uint8_t>& bytes, int* epoch_out) {
  io::ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "STCW", 4) != 0)
    throw io::FormatError(io::FormatError::Kind::BadMagic,
                          "bad checkpoint magic, expected STCW");
  uint32_t version = r.u32();
  if (version != 1)
    throw io::FormatError(io::FormatError::Kind::Invalid,
                          strfmt("unsupported checkpoint version %u", version));
  uint32_t hlen = r.u32();
  json header;
  try {
    header = json::parse(r.str(hlen));
  } catch (const json::exception& e) {
    throw io::FormatError(io::FormatError::Kind::Invalid,
                          strfmt("checkpoint header is not valid JSON: %s", e.what()));
  }

  STCNetModel model;
  int epoch = 0;
  try {
    BackboneConfig config = config_from_json(header.at("config"));
    FusionVariant variant = variant_from_name(header.at("variant").get<std::string>());
    uint64_t seed = header.at("seed").get<uint64_t>();
    epoch = header.at("epoch").get<int>();
    model = build_model(config, variant, seed);
  } catch (const json::exception& e) {
    throw io::FormatError(io::FormatError::Kind::Invalid,
                          strfmt("checkpoint header missing fields: %s", e.what()));
  }

  auto params = model.parameters();
  auto bufs = model.buffers();
  uint32_t count = r.u32();
  if (count != params.size() + bufs.size())
    throw io::FormatError(io::FormatError::Kind::Invalid,
                          strfmt("checkpoint has %u records, model needs %zu", count,
                                 params.size() + bufs.size()));
  for (uint32_t i = 0; i < count; ++i) {
    auto [name, tensor] = io::read_named_tensor(r);
    if (i < params.size()) {
      ParamRef& p = params[i];
      if (p.name != name)
        throw io::FormatError(io::FormatError::Kind::Invalid,
                              strfmt("record %u named '%s', expected '%s'", i,
                                     name.c_str(), p.name.c_str()));
      if (tensor.shape() != p.tensor.shape())
        throw io::FormatError(io::FormatError::Kind::Invalid,
                              strfmt("record '%s' has shape %s, model expects %s",
                                     name.c_str(), tensor.shape().str().c_str(),
                                     p.tensor.shape().str().c_str()));
      std::copy(tensor.data().begin(), tensor.data().end(), p.tensor.mutable_data().begin());
    } else {
      BufferRef& b = bufs[i - params.size()];
      if (b.name != name)
        throw io::FormatError(io::FormatError::Kind::Invalid,
                              strfmt("record %u named '%s', expected '%s'", i,
                                     name.c_str(), b.name.c_str()));
      if (tensor.numel() != static_cast<int64_t>(b.data->size()))
        throw io::FormatError(io::FormatError::Kind::Invalid,
                              strfmt("buffer '%s' length mismatch", name.c_str()));
      std::copy(tensor.data().begin(), tensor.data().end(), b.data->begin());
    }
  }
  if (!r.done())
    throw io::FormatError(io::FormatError::Kind::Invalid,
                          strfmt("%zu trailing bytes after checkpoint records", r.remaining()));
  if (epoch_out) *epoch_out = epoch;
  return model;
}

void save_checkpoint(STCNetModel& model, int epoch, const std::filesystem::path& path) {
  io::write_file(path, checkpoint_encode(model, epoch));
}

STCNetModel load_checkpoint(const std::filesystem::path& path, int* epoch_out) {
  return checkpoint_decode(io::read_file(path), epoch_out);
}

}  // namespace stc
