// Eigen must be parsed before httplib pulls in <resolv.h>, whose _res macro clashes with it.
#include "rfamp/agents.hpp"

#include <cstdlib>
#include <regex>

#include <fmt/format.h>
#include <httplib.h>

namespace rfamp {

using nlohmann::json;

EndpointConfig EndpointConfig::from_env()
{
    const char* url = std::getenv("RFAMP_LLM_URL");
    const char* key = std::getenv("RFAMP_LLM_KEY");
    if (!url || !*url)
        throw PolicyError("RFAMP_LLM_URL is not set");
    if (!key || !*key)
        throw PolicyError("RFAMP_LLM_KEY is not set");
    EndpointConfig c;
    c.url = url;
    c.key = key;
    if (const char* model = std::getenv("RFAMP_LLM_MODEL"); model && *model)
        c.model = model;
    return c;
}

namespace {

const char* kRolePrompt[] = {
    "searcher",
    "You are the search sub-agent of an RF low-noise amplifier design team. For the power split in the task, "
    "size the active devices, then solve the critical stages for every returned configuration, once with the "
    "given stage-2 gain requirement and once without it. Finish with Terminate when every configuration has "
    "been matched.",
    "refiner",
    "You are the refinement sub-agent of an RF low-noise amplifier design team. The critical stages of the "
    "candidate are fixed. Plan the remaining stages over the band, evaluate the whole chain and react to the "
    "violations: rematch with more noise headroom for NF, shift gain to the last stage for linearity, and stop "
    "with Terminate once every constraint holds or the candidate is hopeless.",
};

std::string role_prompt(const std::string& agent)
{
    for (std::size_t i = 0; i + 1 < std::size(kRolePrompt); i += 2)
        if (agent == kRolePrompt[i])
            return kRolePrompt[i + 1];
    return "You are a sub-agent of an RF amplifier design team.";
}

json parameters_of(const std::string& tool)
{
    const auto obj = json{{"type", "object"}};
    const auto num = json{{"type", "number"}};
    const auto list = json{{"type", "array"}, {"items", num}};
    json p = {{"type", "object"}, {"properties", json::object()}, {"required", json::array()}};
    auto add = [&](const char* name, const json& schema, bool required) {
        p["properties"][name] = schema;
        if (required)
            p["required"].push_back(name);
    };
    if (tool == "ActiveSizing") {
        add("power_ratio_list", list, true);
    } else if (tool == "ImpedanceMatching") {
        add("active_params_dict", obj, true);
        add("nf_headroom", num, false);
        add("gain_require", num, false);
    } else if (tool == "BandPlanning") {
        add("active_params_dict", obj, true);
        add("passive_params_cpstages", obj, true);
        add("gain_list", list, true);
        add("gain_req_list", list, false);
    } else if (tool == "FullchainEval") {
        add("wholechain_active_dict", obj, true);
        add("wholechain_passive_dict", obj, true);
    } else {
        add("success", json{{"type", "boolean"}}, true);
        add("failure_reasons", json{{"type", "array"}, {"items", json{{"type", "string"}}}}, false);
    }
    return p;
}

json tool_schemas()
{
    json tools = json::array();
    for (const auto& d : tool_documentation())
        tools.push_back(json{{"type", "function"},
                             {"function",
                              {{"name", d.at("name")},
                               {"description", d.at("description")},
                               {"parameters", parameters_of(d.at("name").get<std::string>())}}}});
    tools.push_back(json{{"type", "function"},
                         {"function",
                          {{"name", "Terminate"},
                           {"description", "Ends the task and reports whether it succeeded."},
                           {"parameters", parameters_of("Terminate")}}}});
    return tools;
}

PolicyTurn action_turn(const std::string& name, json args, std::string thought, TokenCount tokens)
{
    PolicyTurn t;
    t.thought = std::move(thought);
    t.tokens = tokens;
    if (!args.is_object())
        throw MalformedAction(fmt::format("arguments of {} are not an object", name), tokens);
    if (name == "Terminate") {
        AgentReport r;
        r.success = args.value("success", false);
        if (args.contains("failure_reasons") && args.at("failure_reasons").is_array())
            for (const auto& s : args.at("failure_reasons"))
                if (s.is_string())
                    r.failure_reasons.push_back(s.get<std::string>());
        t.final_report = r;
        return t;
    }
    try {
        t.action = ToolCall{tool_name_from_string(name), std::move(args), {}, 0};
    } catch (const SchemaError& e) {
        throw MalformedAction(e.what(), tokens);
    }
    return t;
}

json parse_arguments(const json& raw, TokenCount tokens)
{
    if (raw.is_object())
        return raw;
    if (raw.is_string()) {
        const json j = json::parse(raw.get<std::string>(), nullptr, false);
        if (!j.is_discarded())
            return j;
    }
    throw MalformedAction("tool arguments are not a JSON object", tokens);
}

} // namespace

json RemotePolicy::render(const TaskFrame& frame, std::span<const PolicyTurn> transcript) const
{
    json messages = json::array();
    const std::string system =
        role_prompt(frame.agent) + "\n\nTools:\n" + tool_documentation().dump(2) +
        "\n\nAnswer with exactly one tool call. Without tool-call support, answer with one JSON object "
        "{\"thought\": ..., \"action\": <tool name or \"Terminate\">, \"args\": {...}}.";
    messages.push_back(json{{"role", "system"}, {"content", system}});
    messages.push_back(json{{"role", "user"}, {"content", "Task:\n" + frame.context.dump()}});
    for (const auto& t : transcript) {
        json said{{"thought", t.thought}};
        if (t.malformed)
            said["action"] = "<unparsable>";
        else if (t.action)
            said.update(json{{"action", to_string(t.action->tool)}, {"args", t.action->args}});
        else
            said["action"] = "Terminate";
        messages.push_back(json{{"role", "assistant"}, {"content", said.dump()}});
        if (t.observation)
            messages.push_back(json{{"role", "user"}, {"content", "Observation:\n" + json(*t.observation).dump()}});
    }
    return json{{"model", cfg_.model}, {"messages", messages}, {"tools", tool_schemas()}};
}

PolicyTurn RemotePolicy::parse_reply(const json& reply)
{
    TokenCount tokens;
    if (reply.contains("usage") && reply.at("usage").is_object()) {
        tokens.prompt = reply.at("usage").value("prompt_tokens", std::int64_t{0});
        tokens.completion = reply.at("usage").value("completion_tokens", std::int64_t{0});
    }
    json message = reply;
    if (reply.contains("choices") && reply.at("choices").is_array() && !reply.at("choices").empty())
        message = reply.at("choices")[0].value("message", json::object());

    const std::string content =
        message.contains("content") && message.at("content").is_string() ? message.at("content").get<std::string>() : "";
    if (message.contains("tool_calls") && message.at("tool_calls").is_array() && !message.at("tool_calls").empty()) {
        const json& fn = message.at("tool_calls")[0].value("function", json::object());
        if (!fn.contains("name") || !fn.at("name").is_string())
            throw MalformedAction("tool call without a name", tokens);
        return action_turn(fn.at("name").get<std::string>(), parse_arguments(fn.value("arguments", json::object()), tokens),
                           content, tokens);
    }

    // Plain text: the first {...} block that parses as an action object.
    static const std::regex block(R"(\{[\s\S]*\})");
    std::smatch m;
    if (std::regex_search(content, m, block)) {
        const json j = json::parse(m.str(), nullptr, false);
        if (!j.is_discarded() && j.is_object() && j.contains("action") && j.at("action").is_string()) {
            json args = j.value("args", json::object());
            if (j.at("action") == "Terminate" && j.contains("report"))
                args = j.at("report");
            return action_turn(j.at("action").get<std::string>(), std::move(args), j.value("thought", std::string{}),
                               tokens);
        }
    }
    throw MalformedAction("reply carries neither a tool call nor an action object", tokens);
}

PolicyTurn RemotePolicy::next(const TaskFrame& frame, std::span<const PolicyTurn> transcript)
{
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg_.url, m, url_re))
        throw PolicyError(fmt::format("endpoint url \"{}\" is not http(s)://host[:port]/path", cfg_.url));
    httplib::Client client(m[1].str());
    const auto timeout = std::chrono::duration<double>(cfg_.timeout_s);
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_bearer_token_auth(cfg_.key);
    const std::string path = m[2].matched ? m[2].str() : "/";

    const auto res = client.Post(path, render(frame, transcript).dump(), "application/json");
    if (!res)
        throw PolicyError(fmt::format("POST {}: {}", cfg_.url, httplib::to_string(res.error())));
    if (res->status / 100 != 2)
        throw PolicyError(fmt::format("POST {}: HTTP {}", cfg_.url, res->status));
    const json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded())
        throw MalformedAction("reply body is not JSON", {});
    return parse_reply(reply);
}

} // namespace rfamp
