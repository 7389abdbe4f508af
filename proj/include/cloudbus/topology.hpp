// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

// Inventory of physical and virtual components and their relationships.
//
// Edges point from parent to child. For `hosts` the parent runs the child
// (host -> vm -> service); for `depends_on` the child depends on the parent,
// so a parent failure explains a child symptom. The graph restricted to
// hosts and depends_on edges is kept acyclic; `connects` edges are stored
// but never traversed by the analysis code.

#pragma once

#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cloudbus/event_model.hpp"

namespace cloudbus {

enum class Layer { kPhysical, kVirtual, kService };

std::string_view to_string(Layer layer);
std::optional<Layer> parse_layer(std::string_view text);
Layer layer_for(ComponentKind kind);

enum class EdgeKind { kHosts, kConnects, kDependsOn };

std::string_view to_string(EdgeKind kind);
std::optional<EdgeKind> parse_edge_kind(std::string_view text);

inline const std::set<EdgeKind> kCausalEdges{EdgeKind::kHosts, EdgeKind::kDependsOn};

struct InventoryNode {
  ComponentId component;
  Layer layer = Layer::kService;
  Payload attrs;
  Payload config;
  std::string config_hash;

  bool operator==(const InventoryNode&) const = default;
};

/// Node with layer derived from the kind and the hash filled in.
InventoryNode make_node(ComponentId component, Payload attrs = {}, Payload config = {});

struct RelationshipEdge {
  ComponentId parent;
  ComponentId child;
  EdgeKind kind = EdgeKind::kHosts;

  auto operator<=>(const RelationshipEdge&) const = default;
};

/// Sorted `key=value` lines; numbers with an integral value render without
/// a fractional part so 1 and 1.0 compare equal.
std::string canonical_config(const Payload& config);
/// Hex SHA-256 of canonical_config.
std::string config_digest(const Payload& config);

struct MappingInference {
  std::vector<RelationshipEdge> added;
  /// Virtual nodes with no usable host_id, sorted by id.
  std::vector<ComponentId> orphans;
};

class Topology {
 public:
  Topology() = default;
  Topology(const Topology& other);
  Topology& operator=(const Topology& other);

  /// Inserts or replaces a node; config_hash is recomputed. Throws
  /// kLayerError when the layer disagrees with the kind or when a kind change
  /// would break an existing hosts edge, kInvalidComponent on a bad id.
  void upsert_node(InventoryNode node);

  /// Throws kUnknownComponent, kLayerError or kCycleError; a rejected link
  /// leaves the graph unchanged. Linking an existing triple is a no-op.
  void link(std::string_view parent, std::string_view child, EdgeKind kind);
  /// Removes the triple if present. Throws kUnknownComponent.
  void unlink(std::string_view parent, std::string_view child, EdgeKind kind);

  bool contains(std::string_view id) const;
  std::optional<InventoryNode> node(std::string_view id) const;
  std::vector<InventoryNode> nodes() const;
  std::vector<RelationshipEdge> edges() const;
  std::size_t node_count() const;

  /// Joins virtual nodes to physical hosts through attrs["host_id"], after
  /// folding `host_id=<id>` tokens found in observation messages into the
  /// node attributes. Adds and returns only edges not already present.
  MappingInference infer_mapping(std::span<const NormalizedEvent> observations = {});

  /// Stores `new_config` and returns a config.change event when its
  /// canonical hash differs from the stored one. Throws kUnknownComponent.
  std::optional<NormalizedEvent> track_config(std::string_view id, Payload new_config, TimestampMs now,
                                              EventIdGenerator& ids = EventIdGenerator::process_default());

  /// Transitive closure along `kinds`, breadth-first, each level sorted by
  /// id, without duplicates and without the start node.
  std::vector<ComponentId> ancestors(std::string_view id, const std::set<EdgeKind>& kinds = kCausalEdges) const;
  std::vector<ComponentId> descendants(std::string_view id, const std::set<EdgeKind>& kinds = kCausalEdges) const;

  /// Direct parents / children along `kinds`, sorted by id.
  std::vector<std::string> parents(std::string_view id, const std::set<EdgeKind>& kinds = kCausalEdges) const;
  std::vector<std::string> children(std::string_view id, const std::set<EdgeKind>& kinds = kCausalEdges) const;

  nlohmann::ordered_json to_json() const;
  /// Throws kConfigError on malformed documents plus any mutation error.
  static Topology from_json(const nlohmann::json& document);

 private:
  using Adjacency = std::map<std::string, std::set<std::pair<std::string, EdgeKind>>, std::less<>>;

  void check_node(std::string_view id) const;
  bool reaches(std::string_view from, std::string_view to) const;
  std::vector<ComponentId> walk(std::string_view id, const std::set<EdgeKind>& kinds, const Adjacency& adj) const;
  void link_locked(std::string_view parent, std::string_view child, EdgeKind kind);

  mutable std::shared_mutex mu_;
  std::map<std::string, InventoryNode, std::less<>> nodes_;
  Adjacency down_;  // parent -> (child, kind)
  Adjacency up_;    // child -> (parent, kind)
};

}  // namespace cloudbus
