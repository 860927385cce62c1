#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "telroute/topology.hpp"
#include "telroute/traffic.hpp"

namespace telroute {

// Simulation clock in integer microseconds.
using SimTime = std::int64_t;

inline SimTime ms_to_us(double ms) { return static_cast<SimTime>(std::llround(ms * 1000.0)); }
inline double us_to_ms(SimTime us) { return static_cast<double>(us) / 1000.0; }

class RoutingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Destination-based next hops: row u, column z holds the neighbor of u that
// packets for z are sent to. The diagonal is -1.
class ForwardingTable {
 public:
  ForwardingTable() = default;
  explicit ForwardingTable(int num_nodes);

  int num_nodes() const { return n_; }
  NodeId next_hop(NodeId u, NodeId z) const { return hops_[index(u, z)]; }
  void set(NodeId u, NodeId z, NodeId v) { hops_[index(u, z)] = v; }
  std::span<const NodeId> row(NodeId u) const {
    return {hops_.data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(n_),
            static_cast<std::size_t>(n_)};
  }

  // Throws RoutingError on a missing row or a next hop that is no neighbor.
  void validate(const Topology& topology) const;

  bool operator==(const ForwardingTable&) const = default;

 private:
  std::size_t index(NodeId u, NodeId z) const {
    return static_cast<std::size_t>(u) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(z);
  }
  int n_ = 0;
  std::vector<NodeId> hops_;
};

struct RowUpdate {
  NodeId dst = 0;
  NodeId next_hop = 0;
};

enum class TerminalKind { Delivered, BufferDrop, LoopDrop, Discard };

const char* to_string(TerminalKind kind);

// A data packet leaving the network. `path` lists the routers that made a
// forwarding decision for it, in order; `location` is where it ended.
struct TerminalEvent {
  TerminalKind kind = TerminalKind::Delivered;
  int flow = 0;
  Protocol protocol = Protocol::TCP;
  std::int64_t payload_bytes = 0;
  NodeId location = 0;
  SimTime time = 0;
  SimTime send_time = 0;
  std::vector<NodeId> path;
};

struct NodeCounters {
  std::vector<std::int64_t> tx_bytes_to;    // payload injected here, by destination
  std::vector<std::int64_t> rx_bytes_from;  // payload delivered here, by source
  std::int64_t drop_bytes = 0;              // buffer and loop drops decided here
  std::int64_t discard_bytes = 0;           // receiver-side TCP discards here

  std::int64_t tx_total() const;
  std::int64_t rx_total() const;
};

struct EdgeCounters {
  std::int64_t tx_bytes = 0;    // wire bytes put on the link
  std::int64_t drop_bytes = 0;  // wire bytes refused by the send buffer
  std::int64_t drop_packets = 0;
  std::int64_t queue_bytes = 0;  // send-buffer occupancy at step end
  double occupancy = 0.0;        // queue_bytes / capacity at step end
  double mean_occupancy = 0.0;   // time average over the step
};

struct StepTrace {
  SimTime start = 0;
  SimTime end = 0;
  std::vector<TerminalEvent> events;
  std::vector<NodeCounters> nodes;
  std::vector<EdgeCounters> edges;
  std::int64_t delivered_bytes = 0;
  std::int64_t dropped_bytes = 0;  // buffer + loop
  std::int64_t loop_dropped_bytes = 0;
  std::int64_t discarded_bytes = 0;
  std::int64_t sent_bytes = 0;
  std::int64_t delivered_packets = 0;
  SimTime delay_sum_us = 0;  // over delivered packets
  std::int64_t ack_drops = 0;
};

// Per-flow payload ledger. sent counts every transmission, retransmissions
// included; in_network covers packets queued or on a link.
struct FlowAccounting {
  std::int64_t sent = 0;
  std::int64_t delivered = 0;
  std::int64_t dropped = 0;
  std::int64_t discarded = 0;
  std::int64_t in_network = 0;
};

struct SimConfig {
  int mss_bytes = 1500;
  int ack_bytes = 40;
  int tcp_window_cap = 64;
  int reorder_window = 64;
  int loop_factor = 4;
  double initial_cwnd = 2.0;
  SimTime initial_rto_us = 20000;
  SimTime min_rto_us = 1000;
  int max_rto_backoff = 64;
};

class Simulator {
 public:
  Simulator(const Topology& topology, const FlowSchedule& schedule,
            const ForwardingTable& initial, SimConfig config = {});

  SimTime now() const { return now_; }
  const Topology& topology() const { return *topology_; }
  const ForwardingTable& table() const { return table_; }

  // Rows take effect exactly at `at`: packets forwarded at `at` or later use
  // them. Throws RoutingError for a non-neighbor next hop or a past time.
  void install_forwarding(NodeId u, std::span<const RowUpdate> updates, SimTime at);

  // Processes every event with time <= until.
  StepTrace advance(SimTime until);

  // in_network is counted from the live packets, independently of the
  // terminal ledger.
  FlowAccounting accounting(int flow) const;
  std::vector<FlowAccounting> accounting_all() const;
  std::size_t num_flows() const { return flows_.size(); }
  // In-order prefix released to the receiving application, in segments.
  std::int64_t app_segments(int flow) const;
  std::int64_t queued_bytes(EdgeId e) const { return links_[static_cast<std::size_t>(e)].queued_bytes; }
  std::int64_t capacity_bytes(EdgeId e) const { return links_[static_cast<std::size_t>(e)].capacity; }
  int loop_limit() const { return loop_limit_; }

  // Injects a single scripted UDP-style packet (tests and diagnostics).
  void inject_probe(NodeId src, NodeId dst, std::int64_t payload_bytes, int flow_tag = -1);

 private:
  enum class EventType : std::uint8_t { Install, FlowStart, UdpSend, Arrival, LinkFree, TcpTimeout };

  struct Event {
    SimTime time;
    int cls;
    std::uint64_t seq;
    EventType type;
    int a;
    std::int64_t b;
    bool operator>(const Event& o) const {
      if (time != o.time) return time > o.time;
      if (cls != o.cls) return cls > o.cls;
      return seq > o.seq;
    }
  };

  struct Packet {
    int flow = -1;
    bool is_ack = false;
    bool live = false;
    std::int64_t seq = 0;
    std::int64_t payload = 0;
    std::int64_t wire = 0;
    NodeId src = 0;
    NodeId dst = 0;
    SimTime send_time = 0;
    SimTime echo_time = 0;
    std::vector<NodeId> path;
  };

  struct LinkState {
    std::deque<int> queue;
    std::int64_t queued_bytes = 0;
    std::int64_t capacity = 0;
    bool busy = false;
    double rate_mbps = 0.0;
    SimTime prop_us = 0;
    SimTime last_change = 0;
    double occupancy_integral = 0.0;  // bytes * us
  };

  struct TcpSender {
    std::int64_t segments = 0;
    std::int64_t last_bytes = 0;
    std::int64_t snd_una = 0;
    std::int64_t next_seq = 0;
    double cwnd = 2.0;
    double ssthresh = 64.0;
    int dupacks = 0;
    double srtt_us = -1.0;
    int backoff = 1;
    std::uint64_t timer_gen = 0;
    bool started = false;
    bool done = false;
  };

  struct TcpReceiver {
    std::int64_t expected = 0;
    std::vector<char> buffered;  // ring over the reorder window
    std::int64_t buffered_count = 0;
  };

  struct FlowState {
    Flow flow;
    FlowAccounting ledger;
    TcpSender tx;
    TcpReceiver rx;
    std::int64_t udp_packets = 0;
  };

  void push(SimTime t, EventType type, int a, std::int64_t b, int cls = 1);
  void dispatch(const Event& ev);
  int alloc_packet();
  void free_packet(int id);
  void touch_occupancy(LinkState& link);

  void on_flow_start(int flow);
  void on_udp_send(int flow, std::int64_t k);
  void on_arrival(NodeId u, int pkt);
  void on_link_free(EdgeId e);
  void on_tcp_timeout(int flow, std::uint64_t gen);

  void inject_data(int flow, std::int64_t seq, std::int64_t payload);
  void inject_ack(int flow, NodeId at, std::int64_t ack_no, SimTime echo);
  void forward(NodeId u, int pkt);
  void start_transmission(EdgeId e);
  void terminal(TerminalKind kind, int pkt, NodeId location);
  void deliver(NodeId u, int pkt);
  void tcp_receive(NodeId u, int pkt);
  void tcp_on_ack(int flow, std::int64_t ack_no, SimTime echo);
  void tcp_try_send(int flow);
  void tcp_send_segment(int flow, std::int64_t seq);
  void tcp_arm_timer(int flow);
  std::int64_t segment_bytes(const FlowState& fs, std::int64_t seq) const;

  void reset_trace();

  const Topology* topology_;
  SimConfig config_;
  ForwardingTable table_;
  SimTime now_ = 0;
  std::uint64_t seq_ = 0;
  int loop_limit_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  std::vector<Packet> packets_;
  std::vector<int> free_packets_;
  std::vector<LinkState> links_;
  std::vector<FlowState> flows_;
  std::vector<std::vector<RowUpdate>> pending_installs_;
  std::vector<NodeId> pending_install_router_;
  StepTrace trace_;
};

std::string step_trace_to_json(const StepTrace& trace);

}  // namespace telroute
