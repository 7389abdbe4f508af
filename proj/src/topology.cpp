// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cloudbus/topology.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <mutex>

#include "cloudbus/error.hpp"

namespace cloudbus {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string canonical_value(const Scalar& value) {
  if (const auto* d = std::get_if<double>(&value)) {
    if (std::isfinite(*d) && std::trunc(*d) == *d && std::fabs(*d) < 9.0e15) {
      return std::to_string(static_cast<std::int64_t>(*d));
    }
    return scalar_to_string(value);
  }
  if (const auto* s = std::get_if<std::string>(&value)) return json(*s).dump();
  return scalar_to_string(value);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += ", ";
    out += item;
  }
  return out;
}

// Extracts the value of a `host_id=<id>` token from free text.
std::optional<std::string> host_id_token(std::string_view text) {
  constexpr std::string_view kKey = "host_id=";
  for (std::size_t pos = text.find(kKey); pos != std::string_view::npos; pos = text.find(kKey, pos + 1)) {
    if (pos > 0 && std::string_view(" \t;,").find(text[pos - 1]) == std::string_view::npos) continue;
    auto start = pos + kKey.size();
    auto end = text.find_first_of(" \t;,", start);
    auto value = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    if (!value.empty()) return std::string(value);
  }
  return std::nullopt;
}

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::kConfigError, what); }

}  // namespace

std::string_view to_string(Layer layer) {
  switch (layer) {
    case Layer::kPhysical: return "physical";
    case Layer::kVirtual: return "virtual";
    case Layer::kService: return "service";
  }
  return "service";
}

std::optional<Layer> parse_layer(std::string_view text) {
  if (text == "physical") return Layer::kPhysical;
  if (text == "virtual") return Layer::kVirtual;
  if (text == "service") return Layer::kService;
  return std::nullopt;
}

Layer layer_for(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::kPhysicalHost:
    case ComponentKind::kNetworkSwitch: return Layer::kPhysical;
    case ComponentKind::kVm: return Layer::kVirtual;
    case ComponentKind::kService:
    case ComponentKind::kExternal: return Layer::kService;
  }
  return Layer::kService;
}

std::string_view to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::kHosts: return "hosts";
    case EdgeKind::kConnects: return "connects";
    case EdgeKind::kDependsOn: return "depends_on";
  }
  return "hosts";
}

std::optional<EdgeKind> parse_edge_kind(std::string_view text) {
  if (text == "hosts") return EdgeKind::kHosts;
  if (text == "connects") return EdgeKind::kConnects;
  if (text == "depends_on") return EdgeKind::kDependsOn;
  return std::nullopt;
}

InventoryNode make_node(ComponentId component, Payload attrs, Payload config) {
  InventoryNode node{.component = std::move(component), .attrs = std::move(attrs), .config = std::move(config)};
  node.layer = layer_for(node.component.kind);
  node.config_hash = config_digest(node.config);
  return node;
}

std::string canonical_config(const Payload& config) {
  std::string out;
  for (const auto& [key, value] : config) {
    out += json(key).dump();
    out += '=';
    out += canonical_value(value);
    out += '\n';
  }
  return out;
}

std::string config_digest(const Payload& config) {
  const std::string text = canonical_config(config);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(text.data(), text.size(), md.data(), &len, EVP_sha256(), nullptr);
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    std::array<char, 3> b{};
    std::snprintf(b.data(), b.size(), "%02x", md[i]);
    hex += b.data();
  }
  return hex;
}

Topology::Topology(const Topology& other) {
  std::shared_lock lock(other.mu_);
  nodes_ = other.nodes_;
  down_ = other.down_;
  up_ = other.up_;
}

Topology& Topology::operator=(const Topology& other) {
  if (this == &other) return *this;
  Topology copy(other);
  std::unique_lock lock(mu_);
  nodes_ = std::move(copy.nodes_);
  down_ = std::move(copy.down_);
  up_ = std::move(copy.up_);
  return *this;
}

void Topology::check_node(std::string_view id) const {
  if (!nodes_.contains(id)) throw Error(ErrorCode::kUnknownComponent, "unknown component '" + std::string(id) + "'");
}

void Topology::upsert_node(InventoryNode node) {
  if (!is_valid_component_id(node.component.id)) {
    throw Error(ErrorCode::kInvalidComponent, "component id '" + node.component.id + "' is invalid");
  }
  if (node.layer != layer_for(node.component.kind)) {
    throw Error(ErrorCode::kLayerError, "layer " + std::string(to_string(node.layer)) + " does not fit kind " +
                                            std::string(to_string(node.component.kind)));
  }
  node.config_hash = config_digest(node.config);

  std::unique_lock lock(mu_);
  auto existing = nodes_.find(node.component.id);
  if (existing != nodes_.end() && existing->second.layer != node.layer) {
    const auto& id = node.component.id;
    auto bad_edge = [&](const Adjacency& adj, bool as_parent) {
      auto it = adj.find(id);
      if (it == adj.end()) return false;
      for (const auto& [other, kind] : it->second) {
        if (kind != EdgeKind::kHosts) continue;
        Layer other_layer = nodes_.find(other)->second.layer;
        Layer p = as_parent ? node.layer : other_layer;
        Layer c = as_parent ? other_layer : node.layer;
        if (!((p == Layer::kPhysical && c == Layer::kVirtual) || (p == Layer::kVirtual && c == Layer::kService))) return true;
      }
      return false;
    };
    if (bad_edge(down_, true) || bad_edge(up_, false)) {
      throw Error(ErrorCode::kLayerError, "changing the kind of '" + id + "' breaks a hosts edge");
    }
  }
  std::string key = node.component.id;
  nodes_.insert_or_assign(std::move(key), std::move(node));
}

bool Topology::reaches(std::string_view from, std::string_view to) const {
  std::deque<std::string> frontier{std::string(from)};
  std::set<std::string, std::less<>> seen{std::string(from)};
  while (!frontier.empty()) {
    std::string cur = std::move(frontier.front());
    frontier.pop_front();
    if (cur == to) return true;
    auto it = down_.find(cur);
    if (it == down_.end()) continue;
    for (const auto& [next, kind] : it->second) {
      if (kind == EdgeKind::kConnects) continue;
      if (seen.insert(next).second) frontier.push_back(next);
    }
  }
  return false;
}

void Topology::link_locked(std::string_view parent, std::string_view child, EdgeKind kind) {
  check_node(parent);
  check_node(child);
  const std::string p(parent), c(child);
  if (down_[p].contains({c, kind})) return;
  if (kind == EdgeKind::kHosts) {
    Layer pl = nodes_.find(parent)->second.layer;
    Layer cl = nodes_.find(child)->second.layer;
    if (!((pl == Layer::kPhysical && cl == Layer::kVirtual) || (pl == Layer::kVirtual && cl == Layer::kService))) {
      throw Error(ErrorCode::kLayerError, p + " (" + std::string(to_string(pl)) + ") cannot host " + c + " (" +
                                              std::string(to_string(cl)) + ")");
    }
  }
  if (p == c) throw Error(ErrorCode::kCycleError, "self edge on '" + p + "'");
  if (kind != EdgeKind::kConnects && reaches(child, parent)) {
    throw Error(ErrorCode::kCycleError, "edge " + p + " -> " + c + " would close a cycle");
  }
  down_[p].insert({c, kind});
  up_[c].insert({p, kind});
}

void Topology::link(std::string_view parent, std::string_view child, EdgeKind kind) {
  std::unique_lock lock(mu_);
  link_locked(parent, child, kind);
}

void Topology::unlink(std::string_view parent, std::string_view child, EdgeKind kind) {
  std::unique_lock lock(mu_);
  check_node(parent);
  check_node(child);
  if (auto it = down_.find(parent); it != down_.end()) it->second.erase({std::string(child), kind});
  if (auto it = up_.find(child); it != up_.end()) it->second.erase({std::string(parent), kind});
}

bool Topology::contains(std::string_view id) const {
  std::shared_lock lock(mu_);
  return nodes_.contains(id);
}

std::optional<InventoryNode> Topology::node(std::string_view id) const {
  std::shared_lock lock(mu_);
  auto it = nodes_.find(id);
  if (it == nodes_.end()) return std::nullopt;
  return it->second;
}

std::vector<InventoryNode> Topology::nodes() const {
  std::shared_lock lock(mu_);
  std::vector<InventoryNode> out;
  out.reserve(nodes_.size());
  for (const auto& [id, n] : nodes_) out.push_back(n);
  return out;
}

std::vector<RelationshipEdge> Topology::edges() const {
  std::shared_lock lock(mu_);
  std::vector<RelationshipEdge> out;
  for (const auto& [parent, children] : down_) {
    for (const auto& [child, kind] : children) {
      out.push_back({nodes_.find(parent)->second.component, nodes_.find(child)->second.component, kind});
    }
  }
  return out;
}

std::size_t Topology::node_count() const {
  std::shared_lock lock(mu_);
  return nodes_.size();
}

MappingInference Topology::infer_mapping(std::span<const NormalizedEvent> observations) {
  std::unique_lock lock(mu_);
  for (const auto& ev : observations) {
    auto it = nodes_.find(ev.component.id);
    if (it == nodes_.end() || it->second.layer != Layer::kVirtual) continue;
    if (auto host = host_id_token(ev.message)) it->second.attrs["host_id"] = *host;
  }

  MappingInference result;
  for (const auto& [id, n] : nodes_) {
    if (n.layer != Layer::kVirtual) continue;
    auto attr = n.attrs.find("host_id");
    const std::string* host = attr == n.attrs.end() ? nullptr : std::get_if<std::string>(&attr->second);
    auto host_node = host ? nodes_.find(*host) : nodes_.end();
    if (host_node == nodes_.end() || host_node->second.layer != Layer::kPhysical) {
      result.orphans.push_back(n.component);
      continue;
    }
    if (down_[*host].contains({id, EdgeKind::kHosts})) continue;
    try {
      link_locked(*host, id, EdgeKind::kHosts);
      result.added.push_back({host_node->second.component, n.component, EdgeKind::kHosts});
    } catch (const Error&) {
      // A depends_on path from the vm back to the host forbids the edge.
      result.orphans.push_back(n.component);
    }
  }
  return result;
}

std::optional<NormalizedEvent> Topology::track_config(std::string_view id, Payload new_config, TimestampMs now,
                                                      EventIdGenerator& ids) {
  std::unique_lock lock(mu_);
  check_node(id);
  InventoryNode& n = nodes_.find(id)->second;
  std::string digest = config_digest(new_config);
  if (digest == n.config_hash) return std::nullopt;

  std::vector<std::string> added, removed, changed;
  for (const auto& [key, value] : new_config) {
    auto old = n.config.find(key);
    if (old == n.config.end()) {
      added.push_back(key);
    } else if (canonical_value(old->second) != canonical_value(value)) {
      changed.push_back(key);
    }
  }
  for (const auto& [key, value] : n.config) {
    if (!new_config.contains(key)) removed.push_back(key);
  }

  std::string message;
  auto section = [&](const char* label, const std::vector<std::string>& keys) {
    if (keys.empty()) return;
    if (!message.empty()) message += "; ";
    message += label;
    message += ": ";
    message += join(keys);
  };
  section("added", added);
  section("removed", removed);
  section("changed", changed);

  n.config = std::move(new_config);
  n.config_hash = std::move(digest);

  NormalizedEvent ev;
  ev.event_id = ids.next();
  ev.occurred_at = now;
  ev.component = n.component;
  ev.event_class = "config.change";
  ev.severity = Severity::kInfo;
  ev.message = std::move(message);
  ev.dedup_key = dedup_key(ev.component, ev.event_class);
  ev.first_seen = ev.last_seen = now;
  return ev;
}

std::vector<ComponentId> Topology::walk(std::string_view id, const std::set<EdgeKind>& kinds,
                                        const Adjacency& adj) const {
  check_node(id);
  std::set<std::string, std::less<>> seen{std::string(id)};
  std::vector<std::string> level{std::string(id)};
  std::vector<ComponentId> out;
  while (!level.empty()) {
    std::set<std::string> next;
    for (const auto& cur : level) {
      auto it = adj.find(cur);
      if (it == adj.end()) continue;
      for (const auto& [other, kind] : it->second) {
        if (kinds.contains(kind) && !seen.contains(other)) next.insert(other);
      }
    }
    level.assign(next.begin(), next.end());
    for (const auto& other : level) {
      seen.insert(other);
      out.push_back(nodes_.find(other)->second.component);
    }
  }
  return out;
}

std::vector<ComponentId> Topology::ancestors(std::string_view id, const std::set<EdgeKind>& kinds) const {
  std::shared_lock lock(mu_);
  return walk(id, kinds, up_);
}

std::vector<ComponentId> Topology::descendants(std::string_view id, const std::set<EdgeKind>& kinds) const {
  std::shared_lock lock(mu_);
  return walk(id, kinds, down_);
}

std::vector<std::string> Topology::parents(std::string_view id, const std::set<EdgeKind>& kinds) const {
  std::shared_lock lock(mu_);
  check_node(id);
  std::set<std::string> out;
  if (auto it = up_.find(id); it != up_.end()) {
    for (const auto& [other, kind] : it->second) {
      if (kinds.contains(kind)) out.insert(other);
    }
  }
  return {out.begin(), out.end()};
}

std::vector<std::string> Topology::children(std::string_view id, const std::set<EdgeKind>& kinds) const {
  std::shared_lock lock(mu_);
  check_node(id);
  std::set<std::string> out;
  if (auto it = down_.find(id); it != down_.end()) {
    for (const auto& [other, kind] : it->second) {
      if (kinds.contains(kind)) out.insert(other);
    }
  }
  return {out.begin(), out.end()};
}

ordered_json Topology::to_json() const {
  std::shared_lock lock(mu_);
  ordered_json doc;
  ordered_json nodes = ordered_json::array();
  for (const auto& [id, n] : nodes_) {
    nodes.push_back({{"id", n.component.id},
                     {"kind", to_string(n.component.kind)},
                     {"layer", to_string(n.layer)},
                     {"attrs", payload_to_json(n.attrs)},
                     {"config", payload_to_json(n.config)},
                     {"config_hash", n.config_hash}});
  }
  ordered_json edges = ordered_json::array();
  for (const auto& [parent, children] : down_) {
    for (const auto& [child, kind] : children) {
      edges.push_back({{"parent", parent}, {"child", child}, {"kind", to_string(kind)}});
    }
  }
  doc["nodes"] = std::move(nodes);
  doc["edges"] = std::move(edges);
  return doc;
}

Topology Topology::from_json(const json& document) {
  if (!document.is_object()) config_error("topology: document is not an object");
  Topology topo;
  if (auto nodes = document.find("nodes"); nodes != document.end()) {
    if (!nodes->is_array()) config_error("topology.nodes: expected an array");
    std::size_t i = 0;
    for (const auto& entry : *nodes) {
      const std::string where = "topology.nodes[" + std::to_string(i++) + "]";
      if (!entry.is_object() || !entry.contains("id") || !entry["id"].is_string()) config_error(where + ".id: expected a string");
      if (!entry.contains("kind") || !entry["kind"].is_string()) config_error(where + ".kind: expected a string");
      auto kind = parse_component_kind(entry["kind"].get<std::string>());
      if (!kind) config_error(where + ".kind: unknown component kind");
      Payload attrs, config;
      try {
        if (entry.contains("attrs")) attrs = payload_from_json(entry["attrs"]);
        if (entry.contains("config")) config = payload_from_json(entry["config"]);
      } catch (const Error& e) {
        config_error(where + ": " + e.what());
      }
      InventoryNode n = make_node({entry["id"].get<std::string>(), *kind}, std::move(attrs), std::move(config));
      if (entry.contains("layer")) {
        auto layer = entry["layer"].is_string() ? parse_layer(entry["layer"].get<std::string>()) : std::nullopt;
        if (!layer) config_error(where + ".layer: unknown layer");
        n.layer = *layer;
      }
      topo.upsert_node(std::move(n));
    }
  }
  if (auto edges = document.find("edges"); edges != document.end()) {
    if (!edges->is_array()) config_error("topology.edges: expected an array");
    std::size_t i = 0;
    for (const auto& entry : *edges) {
      const std::string where = "topology.edges[" + std::to_string(i++) + "]";
      for (const char* key : {"parent", "child", "kind"}) {
        if (!entry.is_object() || !entry.contains(key) || !entry[key].is_string()) {
          config_error(where + "." + key + ": expected a string");
        }
      }
      auto kind = parse_edge_kind(entry["kind"].get<std::string>());
      if (!kind) config_error(where + ".kind: unknown edge kind");
      topo.link(entry["parent"].get<std::string>(), entry["child"].get<std::string>(), *kind);
    }
  }
  return topo;
}

}  // namespace cloudbus
