#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "secpon/bits.hpp"
#include "secpon/channel.hpp"
#include "secpon/cpr.hpp"
#include "secpon/crypto.hpp"
#include "secpon/dscm.hpp"
#include "secpon/framing.hpp"
#include "secpon/ldpc.hpp"
#include "secpon/polar.hpp"
#include "secpon/rng.hpp"

namespace secpon {

// ---------------------------------------------------------------------------
// TFDMA allocation

struct TfdmaAllocation {
    std::size_t n_subcarriers = 0;
    std::size_t n_slots = 1;
    /// (onu, slot) -> subcarriers, contiguous and ascending.
    std::map<std::pair<std::uint32_t, std::size_t>, std::vector<std::size_t>> grants;

    std::vector<std::size_t> subcarriers(std::uint32_t onu, std::size_t slot) const
    {
        auto it = grants.find({onu, slot % n_slots});
        return it == grants.end() ? std::vector<std::size_t>{} : it->second;
    }

    /// ONU owning a subcarrier in a slot, if any.
    std::optional<std::uint32_t> owner(std::size_t sc, std::size_t slot) const
    {
        for (const auto& [key, scs] : grants)
            if (key.second == slot % n_slots && std::find(scs.begin(), scs.end(), sc) != scs.end())
                return key.first;
        return std::nullopt;
    }
};

/// Disjoint (subcarrier, slot) grants. ONUs take slots round-robin (ONU i in
/// slot i mod S); within a slot the subcarriers are split into contiguous
/// blocks, earlier ONUs taking the remainder. tdma_slots = 0 means pure FDMA.
inline TfdmaAllocation allocate_tfdma(const std::vector<std::uint32_t>& onus, std::size_t subcarriers,
                                      std::size_t tdma_slots = 0)
{
    if (onus.empty() || subcarriers == 0)
        throw std::invalid_argument("allocate_tfdma: need at least one ONU and one subcarrier");
    std::vector<std::uint32_t> sorted(onus);
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument("allocate_tfdma: duplicate ONU id");
    // more slots than ONUs would leave whole slots idle
    const std::size_t slots = tdma_slots == 0 ? 1 : std::min(tdma_slots, onus.size());
    if (tdma_slots == 0 && onus.size() > subcarriers)
        throw std::invalid_argument("allocate_tfdma: more ONUs than subcarriers and no TDMA schedule");
    if ((onus.size() + slots - 1) / slots > subcarriers)
        throw std::invalid_argument("allocate_tfdma: schedule does not fit the ONUs");

    TfdmaAllocation a;
    a.n_subcarriers = subcarriers;
    a.n_slots = slots;
    for (std::size_t s = 0; s < slots; ++s) {
        std::vector<std::uint32_t> in_slot;
        for (std::size_t i = s; i < onus.size(); i += slots)
            in_slot.push_back(onus[i]);
        if (in_slot.empty())
            continue;
        const std::size_t base = subcarriers / in_slot.size();
        const std::size_t extra = subcarriers % in_slot.size();
        std::size_t next = 0;
        for (std::size_t j = 0; j < in_slot.size(); ++j) {
            const std::size_t count = base + (j < extra ? 1 : 0);
            std::vector<std::size_t> scs(count);
            for (auto& sc : scs)
                sc = next++;
            a.grants[{in_slot[j], s}] = std::move(scs);
        }
    }
    return a;
}

// ---------------------------------------------------------------------------
// Sessions

enum class KeyCadence { per_key, per_codeword };

inline std::string to_string(KeyCadence c) { return c == KeyCadence::per_key ? "per_key" : "per_codeword"; }

inline KeyCadence parse_cadence(const std::string& s)
{
    if (s == "per_key")
        return KeyCadence::per_key;
    if (s == "per_codeword")
        return KeyCadence::per_codeword;
    throw std::invalid_argument("unknown key cadence: " + s);
}

/// Link state for one ONU, holding both endpoints: the ONU's key store and the
/// OLT's per-ONU key store, plus the fragment bookkeeping of each side.
struct OnuSession {
    std::uint32_t onu_id = 1;
    KeyStore onu_keys{Direction::downstream};
    KeyStore olt_keys{Direction::downstream};
    std::uint64_t frame_counter = 0;
    /// Next downstream LDPC codeword index for this ONU.
    std::uint64_t ds_codeword = 0;

    // ONU key generation
    std::uint32_t next_seq = 1;
    std::optional<SessionKey> in_flight;
    unsigned next_fragment = 0;
    std::vector<SessionKey> generated;

    // OLT reassembly
    std::optional<KeyFragmentMessage> olt_fragment;
    std::uint32_t olt_highest_seq = 0;
    std::optional<std::uint32_t> olt_announce;

    // ONU missed a downstream codeword and may have missed an announcement
    bool onu_uncertain = false;
};

struct ProtocolConfig {
    DscmPlan plan;
    FrameLayout us_layout = FrameLayout::upstream_default();
    FrameLayout ds_layout = FrameLayout::downstream_default();
    double pilot_a = 1.7;
    CprConfig cpr;
    KeyCadence cadence = KeyCadence::per_key;
    std::uint64_t seed = 1;
    /// 0 means pure FDMA.
    std::size_t tdma_slots = 0;
    unsigned polar_list_size = 8;
    unsigned ldpc_max_iterations = 50;
    bool decode_us_payload = true;
    bool estimate_frequency_offset = true;
    double max_freq_offset_hz = 500e6;
    /// Probability that an upstream key codeword is dropped before decoding.
    double control_loss_probability = 0.0;
};

inline SessionKey bootstrap_key(std::uint64_t seed, std::uint32_t onu_id)
{
    Rng rng(seed, derive_stream({tag("bootstrap-key"), onu_id}));
    SessionKey k;
    for (auto& b : k.key)
        b = static_cast<std::uint8_t>(rng() & 0xFFu);
    k.seq = 0;
    return k;
}

/// Sessions for ONU ids 1..n with a provisioned bootstrap key (seq 0) active
/// from codeword 0 on both sides.
inline std::vector<OnuSession> make_sessions(std::size_t n_onus, std::uint64_t seed)
{
    std::vector<OnuSession> s(n_onus);
    for (std::size_t i = 0; i < n_onus; ++i) {
        s[i].onu_id = static_cast<std::uint32_t>(i + 1);
        const auto k = bootstrap_key(seed, s[i].onu_id);
        s[i].onu_keys.bootstrap(k);
        s[i].olt_keys.bootstrap(k);
    }
    return s;
}

/// Installs a pending key on both sides and queues its announcement, as if it
/// had been distributed upstream.
inline void provision_pending_key(OnuSession& s, SessionKey k)
{
    s.onu_keys.add_pending(k);
    s.olt_keys.add_pending(k);
    s.generated.push_back(k);
    s.olt_highest_seq = std::max(s.olt_highest_seq, k.seq);
    s.next_seq = std::max(s.next_seq, k.seq + 1);
    s.olt_announce = k.seq;
}

// ---------------------------------------------------------------------------
// Report

struct FrameRecord {
    std::uint64_t frame = 0;
    std::uint32_t onu = 0;
    Direction direction = Direction::upstream;
    std::size_t payload_bits = 0; // coded bits compared before FEC
    std::size_t pre_fec_errors = 0;
    std::size_t info_bits = 0; // information bits compared after FEC
    std::size_t post_fec_errors = 0;
    std::size_t codewords = 0;
    std::size_t codewords_failed = 0;
    // upstream key channel
    bool key_sent = false;
    bool key_crc_ok = false;
    std::size_t key_raw_bits = 0;
    std::size_t key_raw_errors = 0;
    // downstream decryption
    std::size_t decrypted_bits = 0;
    std::size_t decrypted_errors = 0;
};

struct SubcarrierMetrics {
    std::size_t frames = 0;
    double snr_db_sum = 0.0;
    std::size_t bits = 0;
    std::size_t errors = 0;
    std::size_t cycle_slips = 0;
};

struct EavesdropperStats {
    std::size_t bits = 0;
    std::size_t agreements = 0;
    std::size_t ciphertext_bits = 0;
    std::size_t ciphertext_errors = 0;

    double agreement() const { return bits ? static_cast<double>(agreements) / static_cast<double>(bits) : 0.0; }
};

struct SessionReport {
    std::vector<FrameRecord> frames;
    std::map<std::size_t, SubcarrierMetrics> subcarriers;
    std::vector<std::pair<std::string, KeyEvent>> key_events; // (endpoint, event)

    std::size_t key_codewords = 0;
    std::size_t crc_failures = 0;
    std::size_t injected_losses = 0;
    std::size_t fragments_rejected = 0;
    std::size_t undetected_key_errors = 0;
    std::size_t keys_assembled = 0;
    std::size_t key_mismatches = 0;
    std::size_t activations = 0;
    std::size_t rotation_failures = 0;
    std::size_t desync_codewords = 0;
    std::size_t control_anomalies = 0;
    std::size_t ds_codewords = 0;
    EavesdropperStats eavesdropper;

    std::size_t total(std::size_t FrameRecord::*field, std::optional<Direction> dir = std::nullopt) const
    {
        std::size_t n = 0;
        for (const auto& f : frames)
            if (!dir || f.direction == *dir)
                n += f.*field;
        return n;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j;
        j["key_codewords"] = key_codewords;
        j["crc_failures"] = crc_failures;
        j["injected_losses"] = injected_losses;
        j["fragments_rejected"] = fragments_rejected;
        j["undetected_key_errors"] = undetected_key_errors;
        j["keys_assembled"] = keys_assembled;
        j["key_mismatches"] = key_mismatches;
        j["activations"] = activations;
        j["rotation_failures"] = rotation_failures;
        j["desync_codewords"] = desync_codewords;
        j["control_anomalies"] = control_anomalies;
        j["ds_codewords"] = ds_codewords;
        j["eavesdropper"] = {{"bits", eavesdropper.bits},
                             {"agreements", eavesdropper.agreements},
                             {"agreement", eavesdropper.agreement()},
                             {"ciphertext_bits", eavesdropper.ciphertext_bits},
                             {"ciphertext_errors", eavesdropper.ciphertext_errors}};
        for (auto dir : {Direction::upstream, Direction::downstream}) {
            const std::string d = to_string(dir);
            j["totals"][d] = {{"payload_bits", total(&FrameRecord::payload_bits, dir)},
                              {"pre_fec_errors", total(&FrameRecord::pre_fec_errors, dir)},
                              {"info_bits", total(&FrameRecord::info_bits, dir)},
                              {"post_fec_errors", total(&FrameRecord::post_fec_errors, dir)},
                              {"decrypted_bits", total(&FrameRecord::decrypted_bits, dir)},
                              {"decrypted_errors", total(&FrameRecord::decrypted_errors, dir)}};
        }
        for (const auto& [sc, m] : subcarriers)
            j["subcarriers"].push_back({{"sc", sc},
                                        {"frames", m.frames},
                                        {"mean_snr_db", m.frames ? m.snr_db_sum / static_cast<double>(m.frames) : 0.0},
                                        {"bits", m.bits},
                                        {"errors", m.errors},
                                        {"cycle_slips", m.cycle_slips}});
        for (const auto& [who, e] : key_events)
            j["key_events"].push_back({{"endpoint", who},
                                       {"seq", e.seq},
                                       {"direction", to_string(e.direction)},
                                       {"state", to_string(e.state)},
                                       {"activation_codeword", e.activation_codeword}});
        return j;
    }

    static constexpr const char* kCsvHeader =
        "frame,onu,direction,payload_bits,pre_fec_errors,info_bits,post_fec_errors,codewords,codewords_failed,"
        "key_sent,key_crc_ok,key_raw_bits,key_raw_errors,decrypted_bits,decrypted_errors";

    void write_csv(std::ostream& os) const
    {
        os << kCsvHeader << '\n';
        for (const auto& f : frames)
            os << f.frame << ',' << f.onu << ',' << to_string(f.direction) << ',' << f.payload_bits << ','
               << f.pre_fec_errors << ',' << f.info_bits << ',' << f.post_fec_errors << ',' << f.codewords << ','
               << f.codewords_failed << ',' << int(f.key_sent) << ',' << int(f.key_crc_ok) << ',' << f.key_raw_bits
               << ',' << f.key_raw_errors << ',' << f.decrypted_bits << ',' << f.decrypted_errors << '\n';
    }
};

// ---------------------------------------------------------------------------
// Physical layer shared by the session runners

namespace detail {

/// Codes, decoders and derived constants, built once per run.
struct Phy {
    const ProtocolConfig& pc;
    const LdpcCode& ldpc;
    LdpcDecoder ldpc_dec;
    PolarCode polar;
    PolarListDecoder polar_dec;
    GcsPilotParams pilot;
    TfdmaAllocation alloc;

    Phy(const ProtocolConfig& cfg, const std::vector<OnuSession>& onus)
        : pc(cfg), ldpc(default_ldpc_code()), ldpc_dec(ldpc), polar(PolarCode::nr(512, 256, cfg.polar_list_size)),
          polar_dec(polar), pilot(GcsPilotParams::make(cfg.pilot_a))
    {
        pc.plan.validate();
        pc.us_layout.validate();
        pc.ds_layout.validate();
        std::vector<std::uint32_t> ids;
        for (const auto& s : onus)
            ids.push_back(s.onu_id);
        alloc = allocate_tfdma(ids, pc.plan.n_subcarriers, pc.tdma_slots);
        for (const auto* l : {&pc.us_layout, &pc.ds_layout})
            if ((l->n_payload * 4) % ldpc.n() != 0)
                throw std::invalid_argument("protocol: payload must hold a whole number of LDPC codewords");
    }

    std::size_t codewords_per_sc(const FrameLayout& l) const { return l.n_payload * 4 / ldpc.n(); }
};

inline BitVec preshared_phase_bits(std::uint64_t seed, std::uint64_t frame, std::size_t sc, std::size_t n,
                                   Direction dir)
{
    Rng rng(seed, derive_stream({tag("pilot-phase"), frame, sc, static_cast<std::uint64_t>(dir)}));
    return rng.bits(n);
}

inline SymbolStream frame_training(std::uint64_t seed, std::size_t sc, std::size_t n)
{
    return training_sequence(n, derive_stream({seed, tag("training"), sc}));
}

struct Reception {
    std::vector<cplx> payload;
    std::vector<cplx> pilots;
    double noise_variance = 0.0;
    double freq_offset_hz = 0.0;
    std::size_t slips = 0;
};

/// FOE on the training of one subcarrier, derotation, demux, CPR.
inline Reception receive_subcarrier(std::span<const cplx> aggregate, std::size_t sc, const ProtocolConfig& pc,
                                    const FrameLayout& layout, std::span<const std::uint8_t> phase_bits,
                                    const SymbolStream& training, double sample_noise_variance)
{
    const auto& plan = pc.plan;
    Reception r;
    std::vector<cplx> wave(aggregate.begin(), aggregate.end());
    if (pc.estimate_frequency_offset && layout.n_training >= 2) {
        const auto tr = demux_symbols(wave, sc, plan, 0, layout.n_training);
        r.freq_offset_hz = estimate_frequency_offset(tr, training.values, plan.baud_per_sc,
                                                     std::min(pc.max_freq_offset_hz, plan.baud_per_sc / 2.0));
        derotate(wave, r.freq_offset_hz, plan.sample_rate());
    }
    SymbolStream frame;
    frame.values = demux_symbols(wave, sc, plan, 0, layout.total());
    const auto parsed = parse_frame(frame, layout);
    auto cpr = recover_frame_phase(parsed.pilots.values, parsed.payload.values, phase_bits, layout, pc.cpr);
    r.payload = std::move(cpr.payload);
    r.pilots = std::move(cpr.pilots);
    r.slips = cpr.estimates.suspected_slips;
    r.noise_variance = sample_noise_variance / plan.weights[sc];
    return r;
}

inline ChannelConfig at_sample_rate(ChannelConfig c, const DscmPlan& plan)
{
    c.symbol_rate = plan.sample_rate();
    c.reference_power = 1.0;
    return c;
}

inline std::uint32_t full_seq(std::uint32_t highest, std::uint8_t low)
{
    std::uint32_t s = highest + 1;
    while ((s & 0xFFu) != low)
        ++s;
    return s;
}

inline void record_sc(SessionReport& rep, std::size_t sc, std::span<const cplx> tx, std::span<const cplx> rx,
                      std::size_t bits, std::size_t errors, std::size_t slips)
{
    auto& m = rep.subcarriers[sc];
    ++m.frames;
    m.snr_db_sum += measure_snr_db(tx, rx);
    m.bits += bits;
    m.errors += errors;
    m.cycle_slips += slips;
}

/// Activation of an assembled key on both sides at the next codeword
/// boundary, with the downstream announcement assumed delivered.
inline void activate_with_ideal_ack(OnuSession& s, std::uint32_t seq, SessionReport& rep)
{
    const std::uint64_t announce_cw = s.ds_codeword;
    const std::uint64_t boundary = announce_cw + 1;
    if (!s.onu_keys.has_pending(seq) || !s.olt_keys.has_pending(seq)) {
        ++rep.rotation_failures;
        return;
    }
    s.olt_keys.activate_at(seq, boundary);
    s.onu_keys.activate_at(seq, boundary);
    s.ds_codeword = boundary;
    ++rep.activations;
    const auto a = s.onu_keys.key_for(boundary), b = s.olt_keys.key_for(boundary);
    const bool generated_match =
        std::any_of(s.generated.begin(), s.generated.end(), [&](const SessionKey& g) { return g.seq == seq && g.key == a.key; });
    if (!(a.key == b.key && a.seq == seq && generated_match))
        ++rep.rotation_failures;
}

/// One upstream frame for every ONU scheduled in this slot.
inline void upstream_frame(std::vector<OnuSession>& onus, const ChannelConfig& cfg, Phy& phy, std::uint64_t frame,
                           bool ideal_ack, SessionReport& rep)
{
    const auto& pc = phy.pc;
    const auto& plan = pc.plan;
    const auto& layout = pc.us_layout;
    const std::size_t slot = frame % phy.alloc.n_slots;
    const std::size_t cw_per_sc = phy.codewords_per_sc(layout);
    const std::size_t n_wave = plan.waveform_length(layout.total());
    const auto taps = plan.pulse();

    struct TxState {
        OnuSession* s;
        std::vector<std::size_t> scs;
        BitVec key_payload, key_coded;
        std::vector<BitVec> info, coded;          // per LDPC codeword
        std::vector<SymbolStream> payload_symbols; // per SC
        std::vector<BitVec> phase_bits;            // per SC
    };
    std::vector<TxState> tx;
    std::vector<cplx> aggregate(n_wave, cplx{});

    for (auto& s : onus) {
        TxState t{&s, phy.alloc.subcarriers(s.onu_id, slot), {}, {}, {}, {}, {}, {}};
        if (t.scs.empty())
            continue;
        if (t.scs.size() * layout.n_pilot < phy.polar.n)
            throw std::invalid_argument("run_upstream_keydist: pilot budget per frame is below one polar codeword");
        if (!s.in_flight) {
            Rng kg(pc.seed, derive_stream({tag("keygen"), s.onu_id, s.next_seq}));
            SessionKey k;
            for (auto& b : k.key)
                b = static_cast<std::uint8_t>(kg() & 0xFFu);
            k.seq = s.next_seq++;
            s.onu_keys.add_pending(k);
            s.generated.push_back(k);
            s.in_flight = k;
            s.next_fragment = 0;
        }
        const auto frags = split_key(*s.in_flight);
        t.key_payload = frags[s.next_fragment].to_bits();
        t.key_coded = polar_encode_payload(t.key_payload, phy.polar);

        std::vector<cplx> onu_wave(n_wave, cplx{});
        for (std::size_t j = 0; j < t.scs.size(); ++j) {
            const std::size_t sc = t.scs[j];
            Rng data(pc.seed, derive_stream({tag("us-data"), frame, s.onu_id, sc}));
            BitVec coded_sc;
            for (std::size_t c = 0; c < cw_per_sc; ++c) {
                t.info.push_back(data.bits(phy.ldpc.k()));
                t.coded.push_back(ldpc_encode(t.info.back(), phy.ldpc));
                coded_sc.insert(coded_sc.end(), t.coded.back().begin(), t.coded.back().end());
            }
            t.payload_symbols.push_back(map_payload_16qam(coded_sc));
            t.phase_bits.push_back(preshared_phase_bits(pc.seed, frame, sc, layout.n_pilot, Direction::upstream));
            SymbolStream pilots;
            for (std::size_t n = 0; n < layout.n_pilot; ++n) {
                const std::size_t kb = j * layout.n_pilot + n;
                const std::uint8_t key_bit = kb < t.key_coded.size() ? t.key_coded[kb] : 0;
                pilots.append(map_pilot(t.phase_bits.back()[n], key_bit, phy.pilot), SymbolRole::pilot);
            }
            const auto fr = assemble_frame(t.payload_symbols.back(), pilots,
                                           frame_training(pc.seed, sc, layout.n_training), layout);
            mux_add(onu_wave, fr.values, sc, plan, taps);
        }
        // each ONU has its own laser
        ChannelConfig laser = at_sample_rate(cfg, plan);
        laser.snr_db = std::numeric_limits<double>::infinity();
        laser.seed = derive_stream({cfg.seed, tag("us-laser"), frame, s.onu_id});
        const auto tx_wave = apply_channel(onu_wave, laser);
        for (std::size_t i = 0; i < n_wave; ++i)
            aggregate[i] += tx_wave[i];
        tx.push_back(std::move(t));
    }

    ChannelConfig noise = at_sample_rate(cfg, plan);
    noise.linewidth_hz = 0.0;
    noise.freq_offset_hz = 0.0;
    noise.seed = derive_stream({cfg.seed, tag("us-olt"), frame});
    add_awgn(aggregate, noise);
    const double var = noise.noise_variance();

    Rng loss(pc.seed, derive_stream({tag("control-loss"), frame}));
    for (auto& t : tx) {
        auto& s = *t.s;
        FrameRecord rec;
        rec.frame = frame;
        rec.onu = s.onu_id;
        rec.direction = Direction::upstream;
        rec.key_sent = true;
        std::vector<double> key_llr;
        BitVec key_hard;
        for (std::size_t j = 0; j < t.scs.size(); ++j) {
            const std::size_t sc = t.scs[j];
            const auto training = frame_training(pc.seed, sc, layout.n_training);
            const auto r = receive_subcarrier(aggregate, sc, pc, layout, t.phase_bits[j], training, var);
            const auto hard = demap_payload_16qam_hard(r.payload);
            BitVec coded_sc;
            for (std::size_t c = 0; c < cw_per_sc; ++c)
                coded_sc.insert(coded_sc.end(), t.coded[j * cw_per_sc + c].begin(), t.coded[j * cw_per_sc + c].end());
            const std::size_t errs = count_bit_errors(hard, coded_sc);
            rec.payload_bits += coded_sc.size();
            rec.pre_fec_errors += errs;
            record_sc(rep, sc, t.payload_symbols[j].values, r.payload, coded_sc.size(), errs, r.slips);
            if (pc.decode_us_payload) {
                const auto llr = demap_payload_16qam_llr(r.payload, r.noise_variance);
                for (std::size_t c = 0; c < cw_per_sc; ++c) {
                    const auto res = phy.ldpc_dec.decode(std::span<const double>(llr).subspan(c * phy.ldpc.n(), phy.ldpc.n()),
                                                         pc.ldpc_max_iterations);
                    rec.codewords += 1;
                    rec.codewords_failed += !res.converged;
                    rec.info_bits += res.info.size();
                    rec.post_fec_errors += count_bit_errors(res.info, t.info[j * cw_per_sc + c]);
                }
            }
            for (std::size_t n = 0; n < layout.n_pilot; ++n) {
                const auto d = demap_pilot(r.pilots[n], phy.pilot, r.noise_variance);
                key_llr.push_back(d.key_llr);
                key_hard.push_back(d.key_bit);
            }
        }
        key_llr.resize(phy.polar.n);
        key_hard.resize(phy.polar.n);
        rec.key_raw_bits = phy.polar.n;
        rec.key_raw_errors = count_bit_errors(key_hard, t.key_coded);
        ++rep.key_codewords;

        const bool dropped = pc.control_loss_probability > 0.0 && loss.uniform() < pc.control_loss_probability;
        std::optional<KeyFragmentMessage> msg;
        if (dropped) {
            ++rep.injected_losses;
            ++rep.crc_failures;
        } else {
            const auto dec = phy.polar_dec.decode(key_llr);
            rec.key_crc_ok = dec.crc_ok;
            if (!dec.crc_ok) {
                ++rep.crc_failures;
            } else {
                // a wrong payload that also passes the padding check is undetected
                try {
                    msg = KeyFragmentMessage::from_bits(dec.payload);
                    if (dec.payload != t.key_payload)
                        ++rep.undetected_key_errors;
                } catch (const std::invalid_argument&) {
                    ++rep.fragments_rejected;
                }
            }
        }
        if (msg) {
            if (msg->fragment_index == 0) {
                s.olt_fragment = msg;
            } else if (s.olt_fragment && s.olt_fragment->seq == msg->seq && s.olt_fragment->fragment_index == 0) {
                SessionKey k = assemble_key(*s.olt_fragment, *msg);
                k.seq = full_seq(s.olt_highest_seq, msg->seq);
                s.olt_fragment.reset();
                ++rep.keys_assembled;
                const bool match = std::any_of(s.generated.begin(), s.generated.end(),
                                               [&](const SessionKey& g) { return g.seq == k.seq && g.key == k.key; });
                if (!match)
                    ++rep.key_mismatches;
                s.olt_keys.add_pending(k);
                s.olt_highest_seq = k.seq;
                if (ideal_ack)
                    activate_with_ideal_ack(s, k.seq, rep);
                else
                    s.olt_announce = k.seq;
            }
        }
        // ONU advances regardless of delivery; there is no upstream feedback
        if (++s.next_fragment == 2)
            s.in_flight.reset();
        ++s.frame_counter;
        if (ideal_ack)
            s.ds_codeword += 2 * phy.alloc.subcarriers(s.onu_id, slot).size();
        rep.frames.push_back(rec);
    }
}

inline SessionKey codeword_key(const SessionKey& k, std::uint64_t c, KeyCadence cadence)
{
    return cadence == KeyCadence::per_codeword ? derive_codeword_key(k, c) : k;
}

inline std::uint8_t control_field(std::span<const std::uint8_t> bits)
{
    std::uint8_t v = 0;
    for (std::size_t i = 0; i < 8; ++i)
        v = static_cast<std::uint8_t>(v << 1 | (bits[i] & 1u));
    return v;
}

/// ONU-side handling of the announcement byte of a decoded codeword.
inline void onu_read_control(OnuSession& s, std::uint64_t c, std::span<const std::uint8_t> cipher, KeyCadence cadence,
                             SessionReport& rep)
{
    if (s.onu_uncertain) {
        // After a missed codeword: the field of a codeword encrypted under key X names X itself
        // or a newer key, so try the active key and then each newer pending key.
        std::vector<SessionKey> cands{s.onu_keys.active()};
        for (const auto& g : s.generated)
            if (g.seq > cands.front().seq && s.onu_keys.has_pending(g.seq))
                cands.push_back(SessionKey{g.key, g.seq, KeyState::active});
        for (const auto& k : cands) {
            const auto plain = aes256_decrypt(cipher.subspan(0, 8), codeword_key(k, c, cadence), c);
            const std::uint8_t f = control_field(plain);
            if (f == (k.seq & 0xFFu)) {
                if (k.seq != s.onu_keys.active().seq)
                    s.onu_keys.activate_at(k.seq, c);
                s.onu_uncertain = false;
                break;
            }
        }
        if (s.onu_uncertain)
            return;
    }
    const auto key = codeword_key(s.onu_keys.key_for(c), c, cadence);
    const std::uint8_t field = control_field(aes256_decrypt(cipher.subspan(0, 8), key, c));
    const auto& cur = s.onu_keys.active();
    if (field == (cur.seq & 0xFFu))
        return;
    for (const auto& g : s.generated)
        if (g.seq > cur.seq && (g.seq & 0xFFu) == field && s.onu_keys.has_pending(g.seq)) {
            s.onu_keys.activate_at(g.seq, c + 1);
            return;
        }
    ++rep.control_anomalies;
}

/// One downstream broadcast frame on all subcarriers.
inline void downstream_frame(std::vector<OnuSession>& onus, const ChannelConfig& cfg, Phy& phy, std::uint64_t frame,
                             bool eavesdropper, const AesKey& eve_key, SessionReport& rep)
{
    const auto& pc = phy.pc;
    const auto& plan = pc.plan;
    const auto& layout = pc.ds_layout;
    const std::size_t slot = frame % phy.alloc.n_slots;
    const std::size_t cw_per_sc = phy.codewords_per_sc(layout);
    const std::size_t ctrl_bits = 8;

    struct CwTx {
        std::uint32_t onu;
        std::uint64_t index;
        BitVec plain, cipher, coded;
    };
    std::vector<std::vector<CwTx>> per_sc(plan.n_subcarriers);
    std::vector<SymbolStream> streams(plan.n_subcarriers);
    std::vector<SymbolStream> payload_tx(plan.n_subcarriers);
    std::vector<BitVec> phase_bits(plan.n_subcarriers);
    std::map<std::uint32_t, OnuSession*> by_id;
    for (auto& s : onus)
        by_id[s.onu_id] = &s;

    for (std::size_t sc = 0; sc < plan.n_subcarriers; ++sc) {
        const auto owner = phy.alloc.owner(sc, slot);
        Rng data(pc.seed, derive_stream({tag("ds-data"), frame, sc}));
        BitVec coded_sc;
        for (std::size_t c = 0; c < cw_per_sc; ++c) {
            CwTx cw;
            cw.onu = owner.value_or(0);
            cw.plain = data.bits(phy.ldpc.k());
            if (owner) {
                auto& s = *by_id.at(*owner);
                cw.index = s.ds_codeword++;
                std::uint8_t field;
                if (s.olt_announce) {
                    field = static_cast<std::uint8_t>(*s.olt_announce & 0xFFu);
                    s.olt_keys.activate_at(*s.olt_announce, cw.index + 1);
                    ++rep.activations;
                    s.olt_announce.reset();
                } else {
                    field = static_cast<std::uint8_t>(s.olt_keys.active().seq & 0xFFu);
                }
                for (std::size_t b = 0; b < ctrl_bits; ++b)
                    cw.plain[b] = (field >> (7 - b)) & 1u;
                const auto key = codeword_key(s.olt_keys.claim(cw.index), cw.index, pc.cadence);
                cw.cipher = aes256_encrypt(cw.plain, key, cw.index);
            } else {
                cw.index = 0;
                cw.cipher = cw.plain; // idle subcarrier carries filler
            }
            cw.coded = ldpc_encode(cw.cipher, phy.ldpc);
            coded_sc.insert(coded_sc.end(), cw.coded.begin(), cw.coded.end());
            per_sc[sc].push_back(std::move(cw));
        }
        payload_tx[sc] = map_payload_16qam(coded_sc);
        phase_bits[sc] = preshared_phase_bits(pc.seed, frame, sc, layout.n_pilot, Direction::downstream);
        Rng filler(pc.seed, derive_stream({tag("ds-pilot-filler"), frame, sc}));
        SymbolStream pilots;
        for (std::size_t n = 0; n < layout.n_pilot; ++n)
            pilots.append(map_pilot(phase_bits[sc][n], filler.bit(), phy.pilot), SymbolRole::pilot);
        streams[sc] = assemble_frame(payload_tx[sc], pilots, frame_training(pc.seed, sc, layout.n_training), layout);
    }
    const auto wave = mux(streams, plan);
    ChannelConfig base = at_sample_rate(cfg, plan);
    base.seed = derive_stream({cfg.seed, tag("ds"), frame});
    const double var = base.noise_variance();
    rep.ds_codewords += cw_per_sc * plan.n_subcarriers;

    // legitimate receivers
    for (auto& s : onus) {
        const auto scs = phy.alloc.subcarriers(s.onu_id, slot);
        if (scs.empty())
            continue;
        ChannelConfig mine = base;
        mine.seed = derive_stream({base.seed, s.onu_id});
        const auto rx = apply_channel(wave, mine);
        FrameRecord rec;
        rec.frame = frame;
        rec.onu = s.onu_id;
        rec.direction = Direction::downstream;
        for (auto sc : scs) {
            const auto training = frame_training(pc.seed, sc, layout.n_training);
            const auto r = receive_subcarrier(rx, sc, pc, layout, phase_bits[sc], training, var);
            const auto hard = demap_payload_16qam_hard(r.payload);
            BitVec coded_sc;
            for (const auto& cw : per_sc[sc])
                coded_sc.insert(coded_sc.end(), cw.coded.begin(), cw.coded.end());
            const std::size_t errs = count_bit_errors(hard, coded_sc);
            rec.payload_bits += coded_sc.size();
            rec.pre_fec_errors += errs;
            record_sc(rep, sc, payload_tx[sc].values, r.payload, coded_sc.size(), errs, r.slips);
            const auto llr = demap_payload_16qam_llr(r.payload, r.noise_variance);
            for (std::size_t c = 0; c < cw_per_sc; ++c) {
                const auto& cw = per_sc[sc][c];
                const auto res = phy.ldpc_dec.decode(std::span<const double>(llr).subspan(c * phy.ldpc.n(), phy.ldpc.n()),
                                                     pc.ldpc_max_iterations);
                rec.codewords += 1;
                rec.codewords_failed += !res.converged;
                rec.info_bits += res.info.size();
                rec.post_fec_errors += count_bit_errors(res.info, cw.cipher);
                if (res.converged)
                    onu_read_control(s, cw.index, res.info, pc.cadence, rep);
                else
                    s.onu_uncertain = true;
                const SessionKey onu_key = s.onu_keys.key_for(cw.index);
                const SessionKey olt_key = s.olt_keys.key_for(cw.index);
                if (!(onu_key.key == olt_key.key && onu_key.seq == olt_key.seq))
                    ++rep.desync_codewords;
                const auto plain = aes256_decrypt(res.info, codeword_key(onu_key, cw.index, pc.cadence), cw.index);
                rec.decrypted_bits += plain.size() - ctrl_bits;
                rec.decrypted_errors += count_bit_errors(std::span<const std::uint8_t>(plain).subspan(ctrl_bits),
                                                         std::span<const std::uint8_t>(cw.plain).subspan(ctrl_bits));
            }
        }
        ++s.frame_counter;
        rep.frames.push_back(rec);
    }

    if (!eavesdropper)
        return;
    // Keyless passive listener on every subcarrier.
    const auto rx = eavesdrop_tap(std::span<const cplx>(wave), base);
    SessionKey guess{eve_key, 0, KeyState::active};
    for (std::size_t sc = 0; sc < plan.n_subcarriers; ++sc) {
        if (!phy.alloc.owner(sc, slot))
            continue;
        const auto training = frame_training(pc.seed, sc, layout.n_training);
        const auto r = receive_subcarrier(rx, sc, pc, layout, phase_bits[sc], training, var);
        const auto llr = demap_payload_16qam_llr(r.payload, r.noise_variance);
        for (std::size_t c = 0; c < cw_per_sc; ++c) {
            const auto& cw = per_sc[sc][c];
            const auto res = phy.ldpc_dec.decode(std::span<const double>(llr).subspan(c * phy.ldpc.n(), phy.ldpc.n()),
                                                 pc.ldpc_max_iterations);
            rep.eavesdropper.ciphertext_bits += res.info.size();
            rep.eavesdropper.ciphertext_errors += count_bit_errors(res.info, cw.cipher);
            const auto plain = aes256_decrypt(res.info, guess, cw.index);
            rep.eavesdropper.bits += plain.size();
            rep.eavesdropper.agreements += plain.size() - count_bit_errors(plain, cw.plain);
        }
    }
}

inline void collect_key_events(const std::vector<OnuSession>& onus, SessionReport& rep)
{
    rep.key_events.clear();
    for (const auto& s : onus) {
        for (const auto& e : s.onu_keys.events())
            rep.key_events.emplace_back("onu" + std::to_string(s.onu_id), e);
        for (const auto& e : s.olt_keys.events())
            rep.key_events.emplace_back("olt/onu" + std::to_string(s.onu_id), e);
    }
}

inline AesKey eavesdropper_key(std::uint64_t seed)
{
    Rng rng(seed, tag("eavesdropper-key"));
    AesKey k{};
    for (auto& b : k)
        b = static_cast<std::uint8_t>(rng() & 0xFFu);
    return k;
}

} // namespace detail

/// Upstream key distribution over the pilot second bits. `cfg` describes the
/// channel at the subcarrier symbol rate; snr_db is the per-subcarrier SNR at
/// unit power weight. Activation of each assembled key happens at the next
/// downstream codeword boundary with the announcement assumed delivered.
inline SessionReport run_upstream_keydist(std::vector<OnuSession>& onus, const ChannelConfig& cfg, std::size_t frames,
                                          const ProtocolConfig& pc = {})
{
    if (onus.empty())
        throw std::invalid_argument("run_upstream_keydist: at least one ONU required");
    cfg.validate();
    detail::Phy phy(pc, onus);
    SessionReport rep;
    for (std::size_t f = 0; f < frames; ++f)
        detail::upstream_frame(onus, cfg, phy, onus.front().frame_counter, true, rep);
    detail::collect_key_events(onus, rep);
    return rep;
}

/// Encrypted downstream broadcast. Pending keys queued for announcement are
/// activated in-band at the next codeword boundary.
inline SessionReport run_downstream_encrypted(std::vector<OnuSession>& onus, const ChannelConfig& cfg,
                                              std::size_t frames, bool eavesdropper, const ProtocolConfig& pc = {})
{
    if (onus.empty())
        throw std::invalid_argument("run_downstream_encrypted: at least one ONU required");
    cfg.validate();
    for (const auto& s : onus)
        if (s.olt_keys.active_count() != 1 || s.onu_keys.active_count() != 1)
            throw std::logic_error("run_downstream_encrypted: every ONU needs an active key on both sides");
    detail::Phy phy(pc, onus);
    SessionReport rep;
    const auto eve = detail::eavesdropper_key(pc.seed);
    for (std::size_t f = 0; f < frames; ++f)
        detail::downstream_frame(onus, cfg, phy, onus.front().frame_counter, eavesdropper, eve, rep);
    detail::collect_key_events(onus, rep);
    return rep;
}

/// Full duplex session: each frame period carries one upstream frame
/// (key distribution) and one downstream frame (encrypted broadcast with
/// in-band activation of the keys received so far).
inline SessionReport run_secure_session(std::vector<OnuSession>& onus, const ChannelConfig& us_cfg,
                                        const ChannelConfig& ds_cfg, std::size_t frames, bool eavesdropper,
                                        const ProtocolConfig& pc = {})
{
    if (onus.empty())
        throw std::invalid_argument("run_secure_session: at least one ONU required");
    us_cfg.validate();
    ds_cfg.validate();
    detail::Phy phy(pc, onus);
    SessionReport rep;
    const auto eve = detail::eavesdropper_key(pc.seed);
    for (std::size_t f = 0; f < frames; ++f) {
        const std::uint64_t frame = onus.front().frame_counter;
        detail::upstream_frame(onus, us_cfg, phy, frame, false, rep);
        for (auto& s : onus)
            s.frame_counter = frame; // the downstream half belongs to the same frame period
        detail::downstream_frame(onus, ds_cfg, phy, frame, eavesdropper, eve, rep);
    }
    detail::collect_key_events(onus, rep);
    return rep;
}

} // namespace secpon
