#pragma once

// Small modified-nodal-analysis solver used as the reference for the two-port code.
// Inductors carry explicit branch currents, so nothing here goes through Y or ABCD forms.

#include <complex>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "rfamp/evaluator.hpp"

namespace oracle {

using cplx = std::complex<double>;
inline constexpr int kGround = -1;

struct Admittance {
    int a, b;
    cplx y;
};
struct Inductor {
    int a, b;
    double henry;
};
struct CoupledPair {
    int a1, b1, a2, b2;
    double l1, l2, m;
};
// Current gm·(v(cp) − v(cn)) flowing from node `from` to node `to` through the source.
struct Vccs {
    int from, to, cp, cn;
    double gm;
};

class Netlist {
public:
    int add_node() { return nodes_++; }
    int nodes() const { return nodes_; }

    void admittance(int a, int b, cplx y) { adm_.push_back({a, b, y}); }
    void inductor(int a, int b, double henry) { ind_.push_back({a, b, henry}); }
    void coupled(int a1, int b1, int a2, int b2, double l1, double l2, double m)
    {
        pairs_.push_back({a1, b1, a2, b2, l1, l2, m});
    }
    void vccs(int from, int to, int cp, int cn, double gm) { vccs_.push_back({from, to, cp, cn, gm}); }

    /// Node voltages for the given current injections (into each node).
    Eigen::VectorXcd solve(double omega, const std::vector<std::pair<int, cplx>>& inject) const
    {
        const int n = nodes_;
        const int m = static_cast<int>(ind_.size() + 2 * pairs_.size());
        Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n + m, n + m);
        Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n + m);
        const cplx jw(0.0, omega);

        auto add = [&](int r, int c, cplx v) {
            if (r >= 0 && c >= 0)
                a(r, c) += v;
        };
        for (const auto& e : adm_) {
            add(e.a, e.a, e.y);
            add(e.b, e.b, e.y);
            add(e.a, e.b, -e.y);
            add(e.b, e.a, -e.y);
        }
        for (const auto& g : vccs_) {
            add(g.from, g.cp, g.gm);
            add(g.from, g.cn, -g.gm);
            add(g.to, g.cp, -g.gm);
            add(g.to, g.cn, g.gm);
        }
        int br = n;
        auto branch = [&](int na, int nb) {
            const int k = br++;
            add(na, k, 1.0);
            add(nb, k, -1.0);
            add(k, na, 1.0);
            add(k, nb, -1.0);
            return k;
        };
        for (const auto& l : ind_) {
            const int k = branch(l.a, l.b);
            a(k, k) -= jw * l.henry;
        }
        for (const auto& p : pairs_) {
            const int k1 = branch(p.a1, p.b1);
            const int k2 = branch(p.a2, p.b2);
            a(k1, k1) -= jw * p.l1;
            a(k1, k2) -= jw * p.m;
            a(k2, k2) -= jw * p.l2;
            a(k2, k1) -= jw * p.m;
        }
        for (const auto& [node, i] : inject)
            if (node >= 0)
                rhs(node) += i;
        const Eigen::VectorXcd x = a.fullPivLu().solve(rhs);
        return x.head(n);
    }

private:
    int nodes_ = 0;
    std::vector<Admittance> adm_;
    std::vector<Inductor> ind_;
    std::vector<CoupledPair> pairs_;
    std::vector<Vccs> vccs_;
};

/// A chain flattened into elements: the source port node, the output node and the
/// gate node of every active stage.
struct FlatChain {
    Netlist net;
    int in = 0;
    int out = 0;
    std::vector<int> gates;
    std::vector<int> block_inputs;  // node feeding block i
};

inline FlatChain flatten(const rfamp::Chain& chain, double omega)
{
    constexpr double pico = 1e-12, femto = 1e-15;
    const cplx jw(0.0, omega);
    FlatChain f;
    f.in = f.net.add_node();
    int cur = f.in;
    for (const auto& block : chain) {
        f.block_inputs.push_back(cur);
        if (const auto* m = std::get_if<rfamp::InputMatchBlock>(&block)) {
            if (m->l_par > 0)
                f.net.inductor(cur, kGround, m->l_par * pico);
            const int next = f.net.add_node();
            f.net.inductor(cur, next, m->l_g * pico);
            cur = next;
        } else if (const auto* a = std::get_if<rfamp::ActiveBlock>(&block)) {
            const int gate = cur;
            f.gates.push_back(gate);
            int source = kGround;
            if (a->l_s > 0) {
                source = f.net.add_node();
                f.net.inductor(source, kGround, a->l_s * pico);
            }
            f.net.admittance(gate, source, jw * a->device.cin * femto);
            const int drain = f.net.add_node();
            f.net.vccs(drain, source, gate, source, a->device.gm * 1e-3);
            f.net.admittance(drain, kGround, 1.0 / a->device.rs_out + jw * a->device.cs_out * femto);
            cur = drain;
        } else if (const auto* r = std::get_if<rfamp::McrBlock>(&block)) {
            const auto& p = r->mcr;
            const int sec = f.net.add_node();
            f.net.admittance(cur, kGround, 1.0 / p.r1 + jw * p.c1 * femto);
            f.net.admittance(sec, kGround, 1.0 / p.r2 + jw * p.c2 * femto);
            f.net.coupled(cur, kGround, sec, kGround, p.l1 * pico, p.l2 * pico,
                          p.k * std::sqrt(p.l1 * p.l2) * pico);
            cur = sec;
        } else {
            const auto& l = std::get<rfamp::LoadBlock>(block);
            const cplx g = std::isinf(l.r) ? cplx(0.0) : cplx(1.0 / l.r);
            f.net.admittance(cur, kGround, g + jw * l.c * femto);
        }
    }
    f.out = cur;
    return f;
}

/// Port quantities of a chain driven from a 50 Ω source with the output open.
struct PortResult {
    cplx gain;  // V_out / (E/2)
    cplx zin;   // looking into the chain from the source
    cplx zout;  // looking back into the chain (load removed), source terminated
    std::vector<cplx> gate_v;  // per E = 1 V
    cplx v_out;
};

inline PortResult ports(const rfamp::Chain& chain, double omega)
{
    const double z0 = rfamp::kZ0;
    PortResult r;
    auto f = flatten(chain, omega);
    f.net.admittance(f.in, kGround, 1.0 / z0);
    // 1 V EMF behind 50 Ω as a Norton source.
    const auto v = f.net.solve(omega, {{f.in, 1.0 / z0}});
    r.v_out = v(f.out);
    r.gain = 2.0 * v(f.out);
    const cplx i_in = (1.0 - v(f.in)) / z0;
    r.zin = v(f.in) / i_in;
    for (int g : f.gates)
        r.gate_v.push_back(v(g));

    rfamp::Chain bare = chain;
    if (!bare.empty() && std::holds_alternative<rfamp::LoadBlock>(bare.back()))
        bare.pop_back();
    auto b = flatten(bare, omega);
    b.net.admittance(b.in, kGround, 1.0 / z0);
    r.zout = b.net.solve(omega, {{b.out, 1.0}})(b.out);
    return r;
}

/// Thevenin view of the node after block `upto` (exclusive), fed by the 50 Ω source.
struct Thevenin {
    cplx voc;
    cplx zth;
    double available_power() const { return std::norm(voc) / (4.0 * zth.real()); }
};

inline Thevenin thevenin_after(const rfamp::Chain& chain, std::size_t upto, double omega)
{
    const double z0 = rfamp::kZ0;
    const rfamp::Chain prefix(chain.begin(), chain.begin() + static_cast<long>(upto));
    auto f = flatten(prefix, omega);
    f.net.admittance(f.in, kGround, 1.0 / z0);
    Thevenin t;
    t.voc = f.net.solve(omega, {{f.in, 1.0 / z0}})(f.out);
    t.zth = f.net.solve(omega, {{f.out, 1.0}})(f.out);
    return t;
}

} // namespace oracle
