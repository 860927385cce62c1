#include "telroute/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace telroute {

ForwardingTable::ForwardingTable(int num_nodes)
    : n_(num_nodes), hops_(static_cast<std::size_t>(num_nodes) * static_cast<std::size_t>(num_nodes), -1) {}

void ForwardingTable::validate(const Topology& topology) const {
  if (n_ != topology.num_nodes()) {
    throw RoutingError("forwarding table size does not match topology");
  }
  std::ostringstream missing;
  int count = 0;
  for (NodeId u = 0; u < n_; ++u) {
    for (NodeId z = 0; z < n_; ++z) {
      if (u == z) continue;
      const NodeId v = next_hop(u, z);
      if (v < 0) {
        if (count++ < 16) missing << " (" << u << "," << z << ")";
        continue;
      }
      if (!topology.adjacent(u, v)) {
        throw RoutingError("row (" + std::to_string(u) + "," + std::to_string(z) +
                           "): next hop " + std::to_string(v) + " is not a neighbor");
      }
    }
  }
  if (count > 0) {
    throw RoutingError("missing rows:" + missing.str() + (count > 16 ? " ..." : ""));
  }
}

const char* to_string(TerminalKind kind) {
  switch (kind) {
    case TerminalKind::Delivered: return "delivered";
    case TerminalKind::BufferDrop: return "buffer_drop";
    case TerminalKind::LoopDrop: return "loop_drop";
    case TerminalKind::Discard: return "discard";
  }
  return "?";
}

std::int64_t NodeCounters::tx_total() const {
  std::int64_t s = 0;
  for (auto b : tx_bytes_to) s += b;
  return s;
}

std::int64_t NodeCounters::rx_total() const {
  std::int64_t s = 0;
  for (auto b : rx_bytes_from) s += b;
  return s;
}

Simulator::Simulator(const Topology& topology, const FlowSchedule& schedule,
                     const ForwardingTable& initial, SimConfig config)
    : topology_(&topology), config_(config), table_(initial) {
  table_.validate(topology);
  loop_limit_ = config_.loop_factor * topology.num_nodes();
  links_.resize(static_cast<std::size_t>(topology.num_edges()));
  for (EdgeId e = 0; e < topology.num_edges(); ++e) {
    auto& l = links_[static_cast<std::size_t>(e)];
    l.capacity = topology.buffer_bytes(e);
    l.rate_mbps = topology.datarate_mbps(e);
    l.prop_us = topology.delay_us(e);
  }
  flows_.reserve(schedule.flows.size());
  for (std::size_t i = 0; i < schedule.flows.size(); ++i) {
    FlowState fs;
    fs.flow = schedule.flows[i];
    if (fs.flow.protocol == Protocol::TCP) {
      const std::int64_t mss = config_.mss_bytes;
      fs.tx.segments = std::max<std::int64_t>(1, (fs.flow.size_bytes + mss - 1) / mss);
      fs.tx.last_bytes = fs.flow.size_bytes - (fs.tx.segments - 1) * mss;
      fs.tx.cwnd = config_.initial_cwnd;
      fs.tx.ssthresh = config_.tcp_window_cap;
      fs.rx.buffered.assign(static_cast<std::size_t>(config_.reorder_window), 0);
    }
    flows_.push_back(std::move(fs));
    push(ms_to_us(schedule.flows[i].start_ms), EventType::FlowStart, static_cast<int>(i), 0);
  }
  reset_trace();
}

void Simulator::push(SimTime t, EventType type, int a, std::int64_t b, int cls) {
  events_.push(Event{t, cls, seq_++, type, a, b});
}

void Simulator::reset_trace() {
  const auto n = static_cast<std::size_t>(topology_->num_nodes());
  trace_ = StepTrace{};
  trace_.start = now_;
  trace_.nodes.resize(n);
  for (auto& nc : trace_.nodes) {
    nc.tx_bytes_to.assign(n, 0);
    nc.rx_bytes_from.assign(n, 0);
  }
  trace_.edges.resize(links_.size());
  for (auto& l : links_) {
    l.last_change = now_;
    l.occupancy_integral = 0.0;
  }
}

void Simulator::install_forwarding(NodeId u, std::span<const RowUpdate> updates, SimTime at) {
  if (at < now_) {
    throw RoutingError("install time " + std::to_string(at) + " us is in the past");
  }
  if (u < 0 || u >= topology_->num_nodes()) {
    throw RoutingError("router " + std::to_string(u) + " does not exist");
  }
  for (const RowUpdate& r : updates) {
    if (r.dst < 0 || r.dst >= topology_->num_nodes() || r.dst == u) {
      throw RoutingError("router " + std::to_string(u) + ": invalid destination " + std::to_string(r.dst));
    }
    if (!topology_->adjacent(u, r.next_hop)) {
      throw RoutingError("row (" + std::to_string(u) + "," + std::to_string(r.dst) + "): next hop " +
                         std::to_string(r.next_hop) + " is not a neighbor");
    }
  }
  pending_installs_.emplace_back(updates.begin(), updates.end());
  pending_install_router_.push_back(u);
  push(at, EventType::Install, u, static_cast<std::int64_t>(pending_installs_.size() - 1), 0);
}

StepTrace Simulator::advance(SimTime until) {
  while (!events_.empty() && events_.top().time <= until) {
    Event ev = events_.top();
    events_.pop();
    now_ = ev.time;
    dispatch(ev);
  }
  now_ = std::max(now_, until);

  const double span = static_cast<double>(now_ - trace_.start);
  for (std::size_t e = 0; e < links_.size(); ++e) {
    auto& l = links_[e];
    touch_occupancy(l);
    auto& ec = trace_.edges[e];
    ec.queue_bytes = l.queued_bytes;
    ec.occupancy = static_cast<double>(l.queued_bytes) / static_cast<double>(l.capacity);
    ec.mean_occupancy = span > 0 ? l.occupancy_integral / (span * static_cast<double>(l.capacity)) : ec.occupancy;
  }
  trace_.end = now_;
  StepTrace out = std::move(trace_);
  reset_trace();
  return out;
}

void Simulator::dispatch(const Event& ev) {
  switch (ev.type) {
    case EventType::Install: {
      const NodeId u = ev.a;
      auto& rows = pending_installs_[static_cast<std::size_t>(ev.b)];
      for (const RowUpdate& r : rows) table_.set(u, r.dst, r.next_hop);
      rows.clear();
      rows.shrink_to_fit();
      break;
    }
    case EventType::FlowStart: on_flow_start(ev.a); break;
    case EventType::UdpSend: on_udp_send(ev.a, ev.b); break;
    case EventType::Arrival: on_arrival(static_cast<NodeId>(ev.b), ev.a); break;
    case EventType::LinkFree: on_link_free(ev.a); break;
    case EventType::TcpTimeout: on_tcp_timeout(ev.a, static_cast<std::uint64_t>(ev.b)); break;
  }
}

int Simulator::alloc_packet() {
  int id;
  if (!free_packets_.empty()) {
    id = free_packets_.back();
    free_packets_.pop_back();
  } else {
    id = static_cast<int>(packets_.size());
    packets_.emplace_back();
  }
  Packet& p = packets_[static_cast<std::size_t>(id)];
  p.live = true;
  p.path.clear();
  return id;
}

void Simulator::free_packet(int id) {
  packets_[static_cast<std::size_t>(id)].live = false;
  free_packets_.push_back(id);
}

void Simulator::touch_occupancy(LinkState& link) {
  link.occupancy_integral += static_cast<double>(link.queued_bytes) * static_cast<double>(now_ - link.last_change);
  link.last_change = now_;
}

void Simulator::on_flow_start(int flow) {
  FlowState& fs = flows_[static_cast<std::size_t>(flow)];
  if (fs.flow.protocol == Protocol::UDP) {
    on_udp_send(flow, 0);
  } else {
    fs.tx.started = true;
    tcp_try_send(flow);
  }
}

void Simulator::on_udp_send(int flow, std::int64_t k) {
  FlowState& fs = flows_[static_cast<std::size_t>(flow)];
  const std::int64_t total = fs.flow.offered_bytes();
  const std::int64_t mss = config_.mss_bytes;
  const std::int64_t packets = std::max<std::int64_t>(1, (total + mss - 1) / mss);
  const std::int64_t payload = (k + 1 < packets) ? mss : std::max<std::int64_t>(1, total - k * mss);
  inject_data(flow, k, payload);
  fs.udp_packets = k + 1;
  if (k + 1 < packets) {
    // Constant bitrate: Mbps equals bits per microsecond.
    const double interval_us = static_cast<double>(mss) * 8.0 / fs.flow.bitrate_mbps;
    const SimTime t0 = ms_to_us(fs.flow.start_ms);
    push(t0 + static_cast<SimTime>(std::llround(interval_us * static_cast<double>(k + 1))),
         EventType::UdpSend, flow, k + 1);
  }
}

void Simulator::inject_data(int flow, std::int64_t seq, std::int64_t payload) {
  FlowState& fs = flows_[static_cast<std::size_t>(flow)];
  const int id = alloc_packet();
  Packet& p = packets_[static_cast<std::size_t>(id)];
  p.flow = flow;
  p.is_ack = false;
  p.seq = seq;
  p.payload = payload;
  p.wire = payload;
  p.src = fs.flow.src;
  p.dst = fs.flow.dst;
  p.send_time = now_;
  p.echo_time = 0;
  fs.ledger.sent += payload;
  trace_.sent_bytes += payload;
  trace_.nodes[static_cast<std::size_t>(p.src)].tx_bytes_to[static_cast<std::size_t>(p.dst)] += payload;
  forward(p.src, id);
}

void Simulator::inject_probe(NodeId src, NodeId dst, std::int64_t payload_bytes, int flow_tag) {
  if (payload_bytes <= 0 || payload_bytes > config_.mss_bytes) {
    throw std::invalid_argument("probe payload must be in (0, mss]");
  }
  const int id = alloc_packet();
  Packet& p = packets_[static_cast<std::size_t>(id)];
  p.flow = flow_tag < 0 ? flow_tag : -1 - flow_tag;
  p.is_ack = false;
  p.seq = 0;
  p.payload = payload_bytes;
  p.wire = payload_bytes;
  p.src = src;
  p.dst = dst;
  p.send_time = now_;
  trace_.sent_bytes += payload_bytes;
  trace_.nodes[static_cast<std::size_t>(src)].tx_bytes_to[static_cast<std::size_t>(dst)] += payload_bytes;
  forward(src, id);
}

void Simulator::inject_ack(int flow, NodeId at, std::int64_t ack_no, SimTime echo) {
  FlowState& fs = flows_[static_cast<std::size_t>(flow)];
  const int id = alloc_packet();
  Packet& p = packets_[static_cast<std::size_t>(id)];
  p.flow = flow;
  p.is_ack = true;
  p.seq = ack_no;
  p.payload = 0;
  p.wire = config_.ack_bytes;
  p.src = at;
  p.dst = fs.flow.src;
  p.send_time = now_;
  p.echo_time = echo;
  forward(at, id);
}

void Simulator::on_arrival(NodeId u, int pkt) { forward(u, pkt); }

void Simulator::forward(NodeId u, int pkt) {
  Packet& p = packets_[static_cast<std::size_t>(pkt)];
  if (p.dst == u) {
    deliver(u, pkt);
    return;
  }
  if (static_cast<int>(p.path.size()) + 1 > loop_limit_) {
    terminal(TerminalKind::LoopDrop, pkt, u);
    return;
  }
  const NodeId next = table_.next_hop(u, p.dst);
  const EdgeId e = topology_->edge_between(u, next);
  p.path.push_back(u);
  LinkState& link = links_[static_cast<std::size_t>(e)];
  if (link.queued_bytes + p.wire > link.capacity) {
    auto& ec = trace_.edges[static_cast<std::size_t>(e)];
    ec.drop_bytes += p.wire;
    ec.drop_packets += 1;
    terminal(TerminalKind::BufferDrop, pkt, u);
    return;
  }
  touch_occupancy(link);
  link.queue.push_back(pkt);
  link.queued_bytes += p.wire;
  if (!link.busy) start_transmission(e);
}

void Simulator::start_transmission(EdgeId e) {
  LinkState& link = links_[static_cast<std::size_t>(e)];
  if (link.queue.empty()) return;
  const int pkt = link.queue.front();
  link.queue.pop_front();
  touch_occupancy(link);
  const Packet& p = packets_[static_cast<std::size_t>(pkt)];
  link.queued_bytes -= p.wire;
  link.busy = true;
  const auto tx_us = static_cast<SimTime>(std::ceil(static_cast<double>(p.wire) * 8.0 / link.rate_mbps));
  trace_.edges[static_cast<std::size_t>(e)].tx_bytes += p.wire;
  push(now_ + tx_us, EventType::LinkFree, e, 0);
  push(now_ + tx_us + link.prop_us, EventType::Arrival, pkt, topology_->edge(e).dst);
}

void Simulator::on_link_free(EdgeId e) {
  LinkState& link = links_[static_cast<std::size_t>(e)];
  link.busy = false;
  start_transmission(e);
}

void Simulator::terminal(TerminalKind kind, int pkt, NodeId location) {
  Packet& p = packets_[static_cast<std::size_t>(pkt)];
  if (p.is_ack) {
    if (kind != TerminalKind::Delivered) ++trace_.ack_drops;
    free_packet(pkt);
    return;
  }
  if (p.flow >= 0) {
    FlowAccounting& ledger = flows_[static_cast<std::size_t>(p.flow)].ledger;
    switch (kind) {
      case TerminalKind::Delivered: ledger.delivered += p.payload; break;
      case TerminalKind::BufferDrop:
      case TerminalKind::LoopDrop: ledger.dropped += p.payload; break;
      case TerminalKind::Discard: ledger.discarded += p.payload; break;
    }
  }
  auto& nc = trace_.nodes[static_cast<std::size_t>(location)];
  switch (kind) {
    case TerminalKind::Delivered:
      trace_.delivered_bytes += p.payload;
      trace_.delivered_packets += 1;
      trace_.delay_sum_us += now_ - p.send_time;
      nc.rx_bytes_from[static_cast<std::size_t>(p.src)] += p.payload;
      break;
    case TerminalKind::LoopDrop:
      trace_.loop_dropped_bytes += p.payload;
      [[fallthrough]];
    case TerminalKind::BufferDrop:
      trace_.dropped_bytes += p.payload;
      nc.drop_bytes += p.payload;
      break;
    case TerminalKind::Discard:
      trace_.discarded_bytes += p.payload;
      nc.discard_bytes += p.payload;
      break;
  }
  TerminalEvent ev;
  ev.kind = kind;
  ev.flow = p.flow;
  ev.protocol = p.flow >= 0 ? flows_[static_cast<std::size_t>(p.flow)].flow.protocol : Protocol::UDP;
  ev.payload_bytes = p.payload;
  ev.location = location;
  ev.time = now_;
  ev.send_time = p.send_time;
  ev.path = p.path;
  trace_.events.push_back(std::move(ev));
  free_packet(pkt);
}

void Simulator::deliver(NodeId u, int pkt) {
  Packet& p = packets_[static_cast<std::size_t>(pkt)];
  if (p.is_ack) {
    const int flow = p.flow;
    const std::int64_t ack_no = p.seq;
    const SimTime echo = p.echo_time;
    free_packet(pkt);
    tcp_on_ack(flow, ack_no, echo);
    return;
  }
  if (p.flow < 0 || flows_[static_cast<std::size_t>(p.flow)].flow.protocol == Protocol::UDP) {
    terminal(TerminalKind::Delivered, pkt, u);
    return;
  }
  tcp_receive(u, pkt);
}

void Simulator::tcp_receive(NodeId u, int pkt) {
  Packet& p = packets_[static_cast<std::size_t>(pkt)];
  const int flow = p.flow;
  const std::int64_t seq = p.seq;
  const SimTime echo = p.send_time;
  TcpReceiver& rx = flows_[static_cast<std::size_t>(flow)].rx;
  const std::int64_t window = config_.reorder_window;
  const auto slot = [&](std::int64_t s) -> char& {
    return rx.buffered[static_cast<std::size_t>(s % window)];
  };

  bool accept = false;
  if (seq == rx.expected) {
    accept = true;
    ++rx.expected;
    while (rx.buffered_count > 0 && slot(rx.expected)) {
      slot(rx.expected) = 0;
      --rx.buffered_count;
      ++rx.expected;
    }
  } else if (seq > rx.expected && seq - rx.expected < window && !slot(seq)) {
    accept = true;
    slot(seq) = 1;
    ++rx.buffered_count;
  }
  terminal(accept ? TerminalKind::Delivered : TerminalKind::Discard, pkt, u);
  inject_ack(flow, u, rx.expected, echo);
}

std::int64_t Simulator::segment_bytes(const FlowState& fs, std::int64_t seq) const {
  return seq + 1 == fs.tx.segments ? fs.tx.last_bytes : config_.mss_bytes;
}

void Simulator::tcp_send_segment(int flow, std::int64_t seq) {
  const FlowState& fs = flows_[static_cast<std::size_t>(flow)];
  inject_data(flow, seq, segment_bytes(fs, seq));
}

void Simulator::tcp_try_send(int flow) {
  FlowState& fs = flows_[static_cast<std::size_t>(flow)];
  TcpSender& tx = fs.tx;
  if (tx.done) return;
  bool sent = false;
  const bool idle = tx.next_seq == tx.snd_una;
  while (tx.next_seq < tx.segments &&
         tx.next_seq < tx.snd_una + static_cast<std::int64_t>(std::floor(tx.cwnd))) {
    const std::int64_t s = tx.next_seq++;
    tcp_send_segment(flow, s);
    sent = true;
  }
  if (sent && idle) tcp_arm_timer(flow);
}

void Simulator::tcp_arm_timer(int flow) {
  TcpSender& tx = flows_[static_cast<std::size_t>(flow)].tx;
  ++tx.timer_gen;
  SimTime rto = tx.srtt_us < 0 ? config_.initial_rto_us
                               : static_cast<SimTime>(std::llround(2.0 * tx.srtt_us));
  rto = std::max(rto, config_.min_rto_us) * tx.backoff;
  push(now_ + rto, EventType::TcpTimeout, flow, static_cast<std::int64_t>(tx.timer_gen));
}

void Simulator::tcp_on_ack(int flow, std::int64_t ack_no, SimTime echo) {
  TcpSender& tx = flows_[static_cast<std::size_t>(flow)].tx;
  if (tx.done) return;
  const double sample = static_cast<double>(now_ - echo);
  tx.srtt_us = tx.srtt_us < 0 ? sample : 0.875 * tx.srtt_us + 0.125 * sample;
  const double cap = config_.tcp_window_cap;

  if (ack_no > tx.snd_una) {
    const std::int64_t newly = ack_no - tx.snd_una;
    tx.snd_una = ack_no;
    tx.dupacks = 0;
    tx.backoff = 1;
    for (std::int64_t i = 0; i < newly; ++i) {
      tx.cwnd += tx.cwnd < tx.ssthresh ? 1.0 : 1.0 / tx.cwnd;
    }
    tx.cwnd = std::min(tx.cwnd, cap);
    if (tx.next_seq < tx.snd_una) tx.next_seq = tx.snd_una;
    if (tx.snd_una >= tx.segments) {
      tx.done = true;
      ++tx.timer_gen;
      return;
    }
    tcp_arm_timer(flow);
    tcp_try_send(flow);
  } else if (ack_no == tx.snd_una && tx.snd_una < tx.next_seq) {
    if (++tx.dupacks == 3) {
      tx.ssthresh = std::max(tx.cwnd / 2.0, 1.0);
      tx.cwnd = tx.ssthresh;
      tcp_send_segment(flow, tx.snd_una);
      tcp_arm_timer(flow);
    }
  }
}

void Simulator::on_tcp_timeout(int flow, std::uint64_t gen) {
  TcpSender& tx = flows_[static_cast<std::size_t>(flow)].tx;
  if (tx.done || gen != tx.timer_gen) return;
  tx.ssthresh = std::max(tx.cwnd / 2.0, 1.0);
  tx.cwnd = std::max(tx.cwnd / 2.0, 1.0);
  tx.next_seq = tx.snd_una;
  tx.dupacks = 0;
  tx.backoff = std::min(tx.backoff * 2, config_.max_rto_backoff);
  const std::int64_t s = tx.next_seq++;
  tcp_send_segment(flow, s);
  tcp_arm_timer(flow);
  tcp_try_send(flow);
}

FlowAccounting Simulator::accounting(int flow) const {
  FlowAccounting a = flows_.at(static_cast<std::size_t>(flow)).ledger;
  a.in_network = 0;
  for (const Packet& p : packets_) {
    if (p.live && !p.is_ack && p.flow == flow) a.in_network += p.payload;
  }
  return a;
}

std::vector<FlowAccounting> Simulator::accounting_all() const {
  std::vector<FlowAccounting> out;
  out.reserve(flows_.size());
  for (const auto& fs : flows_) {
    out.push_back(fs.ledger);
    out.back().in_network = 0;
  }
  for (const Packet& p : packets_) {
    if (p.live && !p.is_ack && p.flow >= 0) out[static_cast<std::size_t>(p.flow)].in_network += p.payload;
  }
  return out;
}

std::int64_t Simulator::app_segments(int flow) const {
  return flows_.at(static_cast<std::size_t>(flow)).rx.expected;
}

std::string step_trace_to_json(const StepTrace& trace) {
  nlohmann::ordered_json doc;
  doc["start_us"] = trace.start;
  doc["end_us"] = trace.end;
  doc["delivered_bytes"] = trace.delivered_bytes;
  doc["dropped_bytes"] = trace.dropped_bytes;
  doc["discarded_bytes"] = trace.discarded_bytes;
  doc["sent_bytes"] = trace.sent_bytes;
  auto& events = doc["events"] = nlohmann::ordered_json::array();
  for (const auto& ev : trace.events) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(ev.kind);
    j["flow"] = ev.flow;
    j["bytes"] = ev.payload_bytes;
    j["at"] = ev.location;
    j["time_us"] = ev.time;
    j["send_us"] = ev.send_time;
    j["path"] = ev.path;
    events.push_back(std::move(j));
  }
  return doc.dump();
}

}  // namespace telroute
